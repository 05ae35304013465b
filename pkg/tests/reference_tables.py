"""Reference per-year results used as TOPSIS input (rows: R-NP, DNN, LEAR)."""

import numpy as np

MODELS = ("R-NP", "DNN", "LEAR")
YEARS = (2021, 2022, 2023)

# MAE, RMSE, MAPE, SMAPE
ACCURACY = {
    2021: [[14.917, 17.714, 6.020, 0.194], [14.333, 17.205, 5.773, 0.183],
           [15.271, 18.069, 7.035, 0.189]],
    2022: [[35.740, 42.239, 7.062, 0.226], [31.637, 38.171, 7.236, 0.206],
           [39.130, 46.100, 13.651, 0.243]],
    2023: [[16.045, 19.690, 12.466, 0.284], [16.285, 19.993, 13.509, 0.292],
           [19.241, 22.741, 14.123, 0.30]],
}

# mean profit Cases I-III, mean cost Case IV
OPERATIONAL = {
    2021: [[0.4459, 0.2712, 0.2806, 0.7842], [0.4616, 0.2307, 0.2416, 0.7951],
           [0.4654, 0.2720, 0.2856, 0.7815]],
    2022: [[1.0792, 0.7203, 0.7444, 1.9818], [1.0867, 0.5834, 0.6099, 1.9905],
           [1.1250, 0.8001, 0.8286, 1.9718]],
    2023: [[0.6160, 0.1150, 0.1310, 0.8197], [0.6227, 0.0210, 0.0252, 0.8459],
           [0.6267, 0.1254, 0.1401, 0.8071]],
}

# MAE of realised vs perfect-foresight value, Cases I-IV
REGRET = {
    2021: [[0.0886, 0.2633, 0.2810, 0.5350], [0.0765, 0.3074, 0.3238, 0.6176],
           [0.0690, 0.2625, 0.2760, 0.5077]],
    2022: [[0.1919, 0.5508, 0.5571, 0.9420], [0.1844, 0.6877, 0.6916, 0.1028],
           [0.1461, 0.4711, 0.4729, 0.8420]],
    2023: [[0.0835, 0.5844, 0.6019, 0.1171], [0.0768, 0.6785, 0.7078, 0.1433],
           [0.0728, 0.5742, 0.5929, 0.1044]],
}

CLOSENESS = {
    2021: [0.5312, 0.5001, 0.5831],
    2022: [0.7748, 0.3511, 0.6216],
    2023: [0.8282, 0.2095, 0.7822],
}

ORDER = {
    2021: ("LEAR", "R-NP", "DNN"),
    2022: ("R-NP", "LEAR", "DNN"),
    2023: ("R-NP", "LEAR", "DNN"),
}


def arrays(year):
    return (np.array(ACCURACY[year]), np.array(OPERATIONAL[year]), np.array(REGRET[year]))
