"""Values recorded from a reference run.  A change here means seeded outputs changed."""

DERIVE_SEED_0_A = 10426478240765714555
DERIVE_SEED_12345_LEVEL_3 = 12779874180598911080
PAIRWISE_12345_RANGE4 = [3, 2, 1, 0, 0, 3, 2, 1]
FOURWISE_7 = [466664, 342902, 801036, 20237, 485725]
SIGNS_99 = [-1, -1, -1, 1, -1, -1, 1, 1, -1, -1]
PRIME_100_1E6_SEED1 = 453889
PRIME_100_200_SEED2 = 107
# median of |X| for the p-stable generator at p = 0.5, 1.5, 2
PSTABLE_MEDIANS = {0.5: 1.2829945, 1.5: 0.96819162, 2.0: 0.95406687}
