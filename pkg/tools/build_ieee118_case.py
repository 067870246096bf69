#!/usr/bin/env python3
"""Build the bundled ieee118.case from the standard public IEEE 118-bus
tables (bus/branch/generator data and polynomial generator costs as they
circulate in the common open-source distributions).

Adaptations for this package's model:

* bus shunts and transformer tap ratios are dropped (not modeled here);
* polynomial generator costs are linearized as c1 + c2 * PMAX (per MWh),
  rescaled by 1/3 and capped at 30 per p.u. so episode-level costs sit in
  the hundreds;
* every load gets an explicit shed cost of 100 per p.u.;
* the published data carries no thermal ratings, so ratings are synthesized
  from the base-case DC flows: rate = max(margin * |flow|, floor), rounded
  up to 0.01 p.u. The slack generator absorbs the published PG/PD imbalance
  before that flow solve. Because the cost-optimal redispatch pattern and
  its AC losses differ from that base pattern, ratings are then expanded
  iteratively until the intact grid at the neutral action (alpha = 1.0) has
  every AC loading at or below 97%: the intact neutral point is calm, and
  stress enters only through attacks and aggressive actions.

Run from the repository root:  python3 tools/build_ieee118_case.py
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from cascade_rl.dcopf import run_dcopf
from cascade_rl.net_model import Branch, Bus, Generator, Load, Network, write_case
from cascade_rl.pf import ac_power_flow, dc_power_flow

# bus id, type (1 pq, 2 pv, 3 slack), Pd MW, Qd MVAr, Vm pu, Va deg
BUS = [
    (1, 2, 51, 27, 0.955, 10.67), (2, 1, 20, 9, 0.971, 11.22),
    (3, 1, 39, 10, 0.968, 11.56), (4, 2, 39, 12, 0.998, 15.28),
    (5, 1, 0, 0, 1.002, 15.73), (6, 2, 52, 22, 0.99, 13.0),
    (7, 1, 19, 2, 0.989, 12.56), (8, 2, 28, 0, 1.015, 20.77),
    (9, 1, 0, 0, 1.043, 28.02), (10, 2, 0, 0, 1.05, 35.61),
    (11, 1, 70, 23, 0.985, 12.72), (12, 2, 47, 10, 0.99, 12.2),
    (13, 1, 34, 16, 0.968, 11.35), (14, 1, 14, 1, 0.984, 11.5),
    (15, 2, 90, 30, 0.97, 11.23), (16, 1, 25, 10, 0.984, 11.91),
    (17, 1, 11, 3, 0.995, 13.74), (18, 2, 60, 34, 0.973, 11.53),
    (19, 2, 45, 25, 0.963, 11.05), (20, 1, 18, 3, 0.958, 11.93),
    (21, 1, 14, 8, 0.959, 13.52), (22, 1, 10, 5, 0.97, 16.08),
    (23, 1, 7, 3, 1.0, 21.0), (24, 2, 13, 0, 0.992, 20.89),
    (25, 2, 0, 0, 1.05, 27.93), (26, 2, 0, 0, 1.015, 29.71),
    (27, 2, 71, 13, 0.968, 15.35), (28, 1, 17, 7, 0.962, 13.62),
    (29, 1, 24, 4, 0.963, 12.63), (30, 1, 0, 0, 0.968, 18.79),
    (31, 2, 43, 27, 0.967, 12.75), (32, 2, 59, 23, 0.964, 14.8),
    (33, 1, 23, 9, 0.972, 10.63), (34, 2, 59, 26, 0.986, 11.3),
    (35, 1, 33, 9, 0.981, 10.87), (36, 2, 31, 17, 0.98, 10.87),
    (37, 1, 0, 0, 0.992, 11.77), (38, 1, 0, 0, 0.962, 16.91),
    (39, 1, 27, 11, 0.97, 8.41), (40, 2, 66, 23, 0.97, 7.35),
    (41, 1, 37, 10, 0.967, 6.92), (42, 2, 96, 23, 0.985, 8.53),
    (43, 1, 18, 7, 0.978, 11.28), (44, 1, 16, 8, 0.985, 13.82),
    (45, 1, 53, 22, 0.987, 15.67), (46, 2, 28, 10, 1.005, 18.49),
    (47, 1, 34, 0, 1.017, 20.73), (48, 1, 20, 11, 1.021, 19.93),
    (49, 2, 87, 30, 1.025, 20.94), (50, 1, 17, 4, 1.001, 18.9),
    (51, 1, 17, 8, 0.967, 16.28), (52, 1, 18, 5, 0.957, 15.32),
    (53, 1, 23, 11, 0.946, 14.35), (54, 2, 113, 32, 0.955, 15.26),
    (55, 2, 63, 22, 0.952, 14.97), (56, 2, 84, 18, 0.954, 15.16),
    (57, 1, 12, 3, 0.971, 16.36), (58, 1, 12, 3, 0.959, 15.51),
    (59, 2, 277, 113, 0.985, 19.37), (60, 1, 78, 3, 0.993, 23.15),
    (61, 2, 0, 0, 0.995, 24.04), (62, 2, 77, 14, 0.998, 23.43),
    (63, 1, 0, 0, 0.969, 22.75), (64, 1, 0, 0, 0.984, 24.52),
    (65, 2, 0, 0, 1.005, 27.65), (66, 2, 39, 18, 1.05, 27.48),
    (67, 1, 28, 7, 1.02, 24.84), (68, 1, 0, 0, 1.003, 27.55),
    (69, 3, 0, 0, 1.035, 30.0), (70, 2, 66, 20, 0.984, 22.58),
    (71, 1, 0, 0, 0.987, 22.15), (72, 2, 12, 0, 0.98, 20.98),
    (73, 2, 6, 0, 0.991, 21.94), (74, 2, 68, 27, 0.958, 21.64),
    (75, 1, 47, 11, 0.967, 22.91), (76, 2, 68, 36, 0.943, 21.77),
    (77, 2, 61, 28, 1.006, 26.72), (78, 1, 71, 26, 1.003, 26.42),
    (79, 1, 39, 32, 1.009, 26.72), (80, 2, 130, 26, 1.04, 28.96),
    (81, 1, 0, 0, 0.997, 28.1), (82, 1, 54, 27, 0.989, 27.24),
    (83, 1, 20, 10, 0.985, 28.42), (84, 1, 11, 7, 0.98, 30.95),
    (85, 2, 24, 15, 0.985, 32.51), (86, 1, 21, 10, 0.987, 31.14),
    (87, 2, 0, 0, 1.015, 31.4), (88, 1, 48, 10, 0.987, 35.64),
    (89, 2, 0, 0, 1.005, 39.69), (90, 2, 163, 42, 0.985, 33.29),
    (91, 2, 10, 0, 0.98, 33.31), (92, 2, 65, 10, 0.993, 33.8),
    (93, 1, 12, 7, 0.987, 30.79), (94, 1, 30, 16, 0.991, 28.64),
    (95, 1, 42, 31, 0.981, 27.67), (96, 1, 38, 15, 0.993, 27.51),
    (97, 1, 15, 9, 1.011, 27.88), (98, 1, 34, 8, 1.024, 27.4),
    (99, 2, 42, 0, 1.01, 27.04), (100, 2, 37, 18, 1.017, 28.03),
    (101, 1, 22, 15, 0.993, 29.61), (102, 1, 5, 3, 0.991, 32.3),
    (103, 2, 23, 16, 1.001, 24.44), (104, 2, 38, 25, 0.971, 21.69),
    (105, 2, 31, 26, 0.965, 20.57), (106, 1, 43, 16, 0.962, 20.32),
    (107, 2, 50, 12, 0.952, 17.53), (108, 1, 2, 1, 0.967, 19.38),
    (109, 1, 8, 3, 0.967, 18.93), (110, 2, 39, 30, 0.973, 18.09),
    (111, 2, 0, 0, 0.98, 19.74), (112, 2, 68, 13, 0.975, 14.99),
    (113, 2, 6, 0, 0.993, 13.74), (114, 1, 8, 3, 0.96, 14.46),
    (115, 1, 22, 7, 0.96, 14.46), (116, 2, 184, 0, 1.005, 27.12),
    (117, 1, 20, 8, 0.974, 10.67), (118, 1, 33, 15, 0.949, 21.92),
]

# from, to, r, x, total line charging b (all p.u. on 100 MVA)
BRANCH = [
    (1, 2, 0.0303, 0.0999, 0.0254), (1, 3, 0.0129, 0.0424, 0.01082),
    (4, 5, 0.00176, 0.00798, 0.0021), (3, 5, 0.0241, 0.108, 0.0284),
    (5, 6, 0.0119, 0.054, 0.01426), (6, 7, 0.00459, 0.0208, 0.0055),
    (8, 9, 0.00244, 0.0305, 1.162), (8, 5, 0.0, 0.0267, 0.0),
    (9, 10, 0.00258, 0.0322, 1.23), (4, 11, 0.0209, 0.0688, 0.01748),
    (5, 11, 0.0203, 0.0682, 0.01738), (11, 12, 0.00595, 0.0196, 0.00502),
    (2, 12, 0.0187, 0.0616, 0.01572), (3, 12, 0.0484, 0.16, 0.0406),
    (7, 12, 0.00862, 0.034, 0.00874), (11, 13, 0.02225, 0.0731, 0.01876),
    (12, 14, 0.0215, 0.0707, 0.01816), (13, 15, 0.0744, 0.2444, 0.06268),
    (14, 15, 0.0595, 0.195, 0.0502), (12, 16, 0.0212, 0.0834, 0.0214),
    (15, 17, 0.0132, 0.0437, 0.0444), (16, 17, 0.0454, 0.1801, 0.0466),
    (17, 18, 0.0123, 0.0505, 0.01298), (18, 19, 0.01119, 0.0493, 0.01142),
    (19, 20, 0.0252, 0.117, 0.0298), (15, 19, 0.012, 0.0394, 0.0101),
    (20, 21, 0.0183, 0.0849, 0.0216), (21, 22, 0.0209, 0.097, 0.0246),
    (22, 23, 0.0342, 0.159, 0.0404), (23, 24, 0.0135, 0.0492, 0.0498),
    (23, 25, 0.0156, 0.08, 0.0864), (26, 25, 0.0, 0.0382, 0.0),
    (25, 27, 0.0318, 0.163, 0.1764), (27, 28, 0.01913, 0.0855, 0.0216),
    (28, 29, 0.0237, 0.0943, 0.0238), (30, 17, 0.0, 0.0388, 0.0),
    (8, 30, 0.00431, 0.0504, 0.514), (26, 30, 0.00799, 0.086, 0.908),
    (17, 31, 0.0474, 0.1563, 0.0399), (29, 31, 0.0108, 0.0331, 0.0083),
    (23, 32, 0.0317, 0.1153, 0.1173), (31, 32, 0.0298, 0.0985, 0.0251),
    (27, 32, 0.0229, 0.0755, 0.01926), (15, 33, 0.038, 0.1244, 0.03194),
    (19, 34, 0.0752, 0.247, 0.0632), (35, 36, 0.00224, 0.0102, 0.00268),
    (35, 37, 0.011, 0.0497, 0.01318), (33, 37, 0.0415, 0.142, 0.0366),
    (34, 36, 0.00871, 0.0268, 0.00568), (34, 37, 0.00256, 0.0094, 0.00984),
    (38, 37, 0.0, 0.0375, 0.0), (37, 39, 0.0321, 0.106, 0.027),
    (37, 40, 0.0593, 0.168, 0.042), (30, 38, 0.00464, 0.054, 0.422),
    (39, 40, 0.0184, 0.0605, 0.01552), (40, 41, 0.0145, 0.0487, 0.01222),
    (40, 42, 0.0555, 0.183, 0.0466), (41, 42, 0.041, 0.135, 0.0344),
    (43, 44, 0.0608, 0.2454, 0.06068), (34, 43, 0.0413, 0.1681, 0.04226),
    (44, 45, 0.0224, 0.0901, 0.0224), (45, 46, 0.04, 0.1356, 0.0332),
    (46, 47, 0.038, 0.127, 0.0316), (46, 48, 0.0601, 0.189, 0.0472),
    (47, 49, 0.0191, 0.0625, 0.01604), (42, 49, 0.0715, 0.323, 0.086),
    (42, 49, 0.0715, 0.323, 0.086), (45, 49, 0.0684, 0.186, 0.0444),
    (48, 49, 0.0179, 0.0505, 0.01258), (49, 50, 0.0267, 0.0752, 0.01874),
    (49, 51, 0.0486, 0.137, 0.0342), (51, 52, 0.0203, 0.0588, 0.01396),
    (52, 53, 0.0405, 0.1635, 0.04058), (53, 54, 0.0263, 0.122, 0.031),
    (49, 54, 0.073, 0.289, 0.0738), (49, 54, 0.0869, 0.291, 0.073),
    (54, 55, 0.0169, 0.0707, 0.0202), (54, 56, 0.00275, 0.00955, 0.00732),
    (55, 56, 0.00488, 0.0151, 0.00374), (56, 57, 0.0343, 0.0966, 0.0242),
    (50, 57, 0.0474, 0.134, 0.0332), (56, 58, 0.0343, 0.0966, 0.0242),
    (51, 58, 0.0255, 0.0719, 0.01788), (54, 59, 0.0503, 0.2293, 0.0598),
    (56, 59, 0.0825, 0.251, 0.0569), (56, 59, 0.0803, 0.239, 0.0536),
    (55, 59, 0.04739, 0.2158, 0.05646), (59, 60, 0.0317, 0.145, 0.0376),
    (59, 61, 0.0328, 0.15, 0.0388), (60, 61, 0.00264, 0.0135, 0.01456),
    (60, 62, 0.0123, 0.0561, 0.01468), (61, 62, 0.00824, 0.0376, 0.0098),
    (63, 59, 0.0, 0.0386, 0.0), (63, 64, 0.00172, 0.02, 0.216),
    (64, 61, 0.0, 0.0268, 0.0), (38, 65, 0.00901, 0.0986, 1.046),
    (64, 65, 0.00269, 0.0302, 0.38), (49, 66, 0.018, 0.0919, 0.0248),
    (49, 66, 0.018, 0.0919, 0.0248), (62, 66, 0.0482, 0.218, 0.0578),
    (62, 67, 0.0258, 0.117, 0.031), (65, 66, 0.0, 0.037, 0.0),
    (66, 67, 0.0224, 0.1015, 0.02682), (65, 68, 0.00138, 0.016, 0.638),
    (47, 69, 0.0844, 0.2778, 0.07092), (49, 69, 0.0985, 0.324, 0.0828),
    (68, 69, 0.0, 0.037, 0.0), (69, 70, 0.03, 0.127, 0.122),
    (24, 70, 0.00221, 0.4115, 0.10198), (70, 71, 0.00882, 0.0355, 0.00878),
    (24, 72, 0.0488, 0.196, 0.0488), (71, 72, 0.0446, 0.18, 0.04444),
    (71, 73, 0.00866, 0.0454, 0.01178), (70, 74, 0.0401, 0.1323, 0.03368),
    (70, 75, 0.0428, 0.141, 0.036), (69, 75, 0.0405, 0.122, 0.124),
    (74, 75, 0.0123, 0.0406, 0.01034), (76, 77, 0.0444, 0.148, 0.0368),
    (69, 77, 0.0309, 0.101, 0.1038), (75, 77, 0.0601, 0.1999, 0.04978),
    (77, 78, 0.00376, 0.0124, 0.01264), (78, 79, 0.00546, 0.0244, 0.00648),
    (77, 80, 0.017, 0.0485, 0.0472), (77, 80, 0.0294, 0.105, 0.0228),
    (79, 80, 0.0156, 0.0704, 0.0187), (68, 81, 0.00175, 0.0202, 0.808),
    (81, 80, 0.0, 0.037, 0.0), (77, 82, 0.0298, 0.0853, 0.08174),
    (82, 83, 0.0112, 0.03665, 0.03796), (83, 84, 0.0625, 0.132, 0.0258),
    (83, 85, 0.043, 0.148, 0.0348), (84, 85, 0.0302, 0.0641, 0.01234),
    (85, 86, 0.035, 0.123, 0.0276), (86, 87, 0.02828, 0.2074, 0.0445),
    (85, 88, 0.02, 0.102, 0.0276), (85, 89, 0.0239, 0.173, 0.047),
    (88, 89, 0.0139, 0.0712, 0.01934), (89, 90, 0.0518, 0.188, 0.0528),
    (89, 90, 0.0238, 0.0997, 0.106), (90, 91, 0.0254, 0.0836, 0.0214),
    (89, 92, 0.0099, 0.0505, 0.0548), (89, 92, 0.0393, 0.1581, 0.0414),
    (91, 92, 0.0387, 0.1272, 0.03268), (92, 93, 0.0258, 0.0848, 0.0218),
    (92, 94, 0.0481, 0.158, 0.0406), (93, 94, 0.0223, 0.0732, 0.01876),
    (94, 95, 0.0132, 0.0434, 0.0111), (80, 96, 0.0356, 0.182, 0.0494),
    (82, 96, 0.0162, 0.053, 0.0544), (94, 96, 0.0269, 0.0869, 0.023),
    (80, 97, 0.0183, 0.0934, 0.0254), (80, 98, 0.0238, 0.108, 0.0286),
    (80, 99, 0.0454, 0.206, 0.0546), (92, 100, 0.0648, 0.295, 0.0472),
    (94, 100, 0.0178, 0.058, 0.0604), (95, 96, 0.0171, 0.0547, 0.01474),
    (96, 97, 0.0173, 0.0885, 0.024), (98, 100, 0.0397, 0.179, 0.0476),
    (99, 100, 0.018, 0.0813, 0.0216), (100, 101, 0.0277, 0.1262, 0.0328),
    (92, 102, 0.0123, 0.0559, 0.01464), (101, 102, 0.0246, 0.112, 0.0294),
    (100, 103, 0.016, 0.0525, 0.0536), (100, 104, 0.0451, 0.204, 0.0541),
    (103, 104, 0.0466, 0.1584, 0.0407), (103, 105, 0.0535, 0.1625, 0.0408),
    (100, 106, 0.0605, 0.229, 0.062), (104, 105, 0.00994, 0.0378, 0.00986),
    (105, 106, 0.014, 0.0547, 0.01434), (105, 107, 0.053, 0.183, 0.0472),
    (105, 108, 0.0261, 0.0703, 0.01844), (106, 107, 0.053, 0.183, 0.0472),
    (108, 109, 0.0105, 0.0288, 0.0076), (103, 110, 0.03906, 0.1813, 0.0461),
    (109, 110, 0.0278, 0.0762, 0.0202), (110, 111, 0.022, 0.0755, 0.02),
    (110, 112, 0.0247, 0.064, 0.062), (17, 113, 0.00913, 0.0301, 0.00768),
    (32, 113, 0.0615, 0.203, 0.0518), (32, 114, 0.0135, 0.0612, 0.01628),
    (27, 115, 0.0164, 0.0741, 0.01972), (114, 115, 0.0023, 0.0104, 0.00276),
    (68, 116, 0.00034, 0.00405, 0.164), (12, 117, 0.0329, 0.14, 0.0358),
    (75, 118, 0.0145, 0.0481, 0.01198), (76, 118, 0.0164, 0.0544, 0.01356),
]

# bus, PG MW, QMAX, QMIN, VG, PMAX MW (PMIN = 0 throughout)
GEN = [
    (1, 0, 15, -5, 0.955, 100), (4, 0, 300, -300, 0.998, 100),
    (6, 0, 50, -13, 0.99, 100), (8, 0, 300, -300, 1.015, 100),
    (10, 450, 200, -147, 1.05, 550), (12, 85, 120, -35, 0.99, 185),
    (15, 0, 30, -10, 0.97, 100), (18, 0, 50, -16, 0.973, 100),
    (19, 0, 24, -8, 0.962, 100), (24, 0, 300, -300, 0.992, 100),
    (25, 220, 140, -47, 1.05, 320), (26, 314, 1000, -1000, 1.015, 414),
    (27, 0, 300, -300, 0.968, 100), (31, 7, 300, -300, 0.967, 107),
    (32, 0, 42, -14, 0.963, 100), (34, 0, 24, -8, 0.984, 100),
    (36, 0, 24, -8, 0.98, 100), (40, 0, 300, -300, 0.97, 100),
    (42, 0, 300, -300, 0.985, 100), (46, 19, 100, -100, 1.005, 119),
    (49, 204, 210, -85, 1.025, 304), (54, 48, 300, -300, 0.955, 148),
    (55, 0, 23, -8, 0.952, 100), (56, 0, 15, -8, 0.954, 100),
    (59, 155, 180, -60, 0.985, 255), (61, 160, 300, -100, 0.995, 260),
    (62, 0, 20, -20, 0.998, 100), (65, 391, 200, -67, 1.005, 491),
    (66, 392, 200, -67, 1.05, 492), (69, 516.4, 300, -300, 1.035, 805.2),
    (70, 0, 32, -10, 0.984, 100), (72, 0, 100, -100, 0.98, 100),
    (73, 0, 100, -100, 0.991, 100), (74, 0, 9, -6, 0.958, 100),
    (76, 0, 23, -8, 0.943, 100), (77, 0, 70, -20, 1.006, 100),
    (80, 477, 280, -165, 1.04, 577), (85, 0, 23, -8, 0.985, 100),
    (87, 4, 1000, -100, 1.015, 104), (89, 607, 300, -210, 1.005, 707),
    (90, 0, 300, -300, 0.985, 100), (91, 0, 100, -100, 0.98, 100),
    (92, 0, 9, -3, 0.99, 100), (99, 0, 100, -100, 1.01, 100),
    (100, 252, 155, -50, 1.017, 352), (103, 40, 40, -15, 1.01, 140),
    (104, 0, 23, -8, 0.971, 100), (105, 0, 23, -8, 0.965, 100),
    (107, 0, 200, -200, 0.952, 100), (110, 0, 23, -8, 0.973, 100),
    (111, 36, 1000, -100, 0.98, 136), (112, 0, 1000, -100, 0.975, 100),
    (113, 0, 200, -100, 0.993, 100), (116, 0, 1000, -1000, 1.005, 100),
]

# polynomial cost (c2, c1) per generator, same order as GEN; c0 = 0
GENCOST = [
    (0.01, 40), (0.01, 40), (0.01, 40), (0.01, 40), (0.0222222, 20),
    (0.117647, 20), (0.01, 40), (0.01, 40), (0.01, 40), (0.01, 40),
    (0.0318471, 20), (0.00834028, 20), (0.01, 40), (1.00459, 20),
    (0.01, 40), (0.01, 40), (0.01, 40), (0.01, 40), (0.01, 40),
    (0.526316, 20), (0.0490196, 20), (0.208333, 20), (0.01, 40),
    (0.01, 40), (0.0645161, 20), (0.0625, 20), (0.01, 40),
    (0.0255754, 20), (0.0255102, 20), (0.0193798, 20), (0.01, 40),
    (0.01, 40), (0.01, 40), (0.01, 40), (0.01, 40), (0.01, 40),
    (0.0209644, 20), (0.01, 40), (2.5, 20), (0.0164745, 20),
    (0.01, 40), (0.01, 40), (0.01, 40), (0.01, 40), (0.0396825, 20),
    (0.25, 20), (0.01, 40), (0.01, 40), (0.01, 40), (0.01, 40),
    (0.277778, 20), (0.01, 40), (0.01, 40), (0.01, 40),
]

BASE_MVA = 100.0
SHED_COST = 100.0  # per p.u. unserved; > every generator cost below
COST_SCALE = 3.0
COST_CAP = 30.0
SLACK_BUS = 69


def linear_cost(c2: float, c1: float, pmax_mw: float) -> float:
    # marginal price that reproduces the polynomial total at PMAX, per p.u.
    per_mwh = c1 + c2 * pmax_mw
    return round(min(per_mwh / COST_SCALE, COST_CAP), 4)


def build(margin: float, floor: float) -> Network:
    vg = {g[0]: g[4] for g in GEN}
    kind = {1: "pq", 2: "pv", 3: "slack"}
    buses = tuple(
        Bus(
            id=i,
            kind=kind[t],
            v_set=vg.get(i) if t != 1 else None,
            v_init=vm,
            theta_init=round(math.radians(va), 6),
        )
        for i, t, _pd, _qd, vm, va in BUS
    )
    gens = tuple(
        Generator(
            bus=bus,
            p_min=0.0,
            p_max=round(pmax / BASE_MVA, 6),
            q_min=round(qmin / BASE_MVA, 6),
            q_max=round(qmax / BASE_MVA, 6),
            cost=linear_cost(c2, c1, pmax),
        )
        for (bus, _pg, qmax, qmin, _vg, pmax), (c2, c1) in zip(GEN, GENCOST)
    )
    loads = tuple(
        Load(
            bus=i,
            p_demand=round(pd / BASE_MVA, 6),
            q_demand=round(qd / BASE_MVA, 6),
            shed_cost=SHED_COST,
        )
        for i, _t, pd, qd, _vm, _va in BUS
        if pd > 0
    )

    # base-case DC flows with the slack unit absorbing the PG/PD imbalance
    provisional = tuple(
        Branch(f, t, r, x, b, rate=1.0) for f, t, r, x, b in BRANCH
    )
    net0 = Network(BASE_MVA, buses, provisional, gens, loads)
    pg = {g[0]: 0.0 for g in GEN}
    for bus, p, *_ in GEN:
        pg[bus] = pg.get(bus, 0.0) + p
    imbalance = sum(pg.values()) - sum(pd for _i, _t, pd, *_ in BUS)
    pg[SLACK_BUS] -= imbalance
    inj = np.zeros(net0.n_bus)
    for i, (bus_id, _t, pd, *_rest) in enumerate(BUS):
        inj[i] = (pg.get(bus_id, 0.0) - pd) / BASE_MVA
    _theta, flow = dc_power_flow(net0, inj)

    def ceil2(x: float) -> float:
        return math.ceil(x * 100) / 100

    def with_rates(rs):
        return Network(
            BASE_MVA,
            buses,
            tuple(
                Branch(f, t, r, x, b, rate=rate)
                for (f, t, r, x, b), rate in zip(BRANCH, rs)
            ),
            gens,
            loads,
        )

    rates = [max(ceil2(margin * abs(fl)), floor) for fl in flow]

    # rate the cost-optimal corridors off the unconstrained economic
    # dispatch so the neutral-action optimum is interior (AC-clean)
    econ_dispatch, _ = run_dcopf(with_rates([1e3] * len(rates)), 1.0)
    econ_sol = ac_power_flow(with_rates([1e3] * len(rates)), econ_dispatch)
    rates = [
        max(r0, ceil2(1.08 * abs(fl)))
        for r0, fl in zip(rates, econ_sol.flow_from)
    ]

    # touch-up for residual interactions (Q-limit re-typing shifts flows)
    net = with_rates(rates)
    for _ in range(10):
        dispatch, _ = run_dcopf(net, 1.0)
        sol = ac_power_flow(net, dispatch)
        hot = [pos for pos in range(len(rates)) if sol.loading[pos] > 0.99]
        if not hot:
            break
        for pos in hot:
            rates[pos] = max(
                rates[pos], ceil2(1.08 * abs(sol.flow_from[pos]))
            )
        net = with_rates(rates)
    return net


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--margin", type=float, default=1.3)
    ap.add_argument("--floor", type=float, default=0.35)
    ap.add_argument(
        "--out",
        default=str(
            Path(__file__).resolve().parents[1]
            / "src"
            / "cascade_rl"
            / "cases"
            / "ieee118.case"
        ),
    )
    args = ap.parse_args()

    net = build(args.margin, args.floor)
    print(
        f"buses={net.n_bus} branches={net.n_branch} gens={net.n_gen} "
        f"loads={net.n_load} demand={net.total_demand():.2f} p.u."
    )

    dispatch, _ = run_dcopf(net, 1.0)
    print(
        f"dcopf(1.0): feasible={dispatch.feasible} "
        f"objective={dispatch.objective:.2f} shed={dispatch.shed_total:.4f}"
    )
    sol = ac_power_flow(net, dispatch)
    over = int(np.sum(sol.loading > 1.0))
    print(
        f"acpf: converged={sol.converged} iters={sol.iterations} "
        f"mismatch={sol.max_mismatch:.2e} overlimit={over} "
        f"max_loading={sol.loading.max():.3f} q_clamped={sol.q_clamped}"
    )

    Path(args.out).write_text(write_case(net), encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
