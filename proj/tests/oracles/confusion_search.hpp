#pragma once

// Enumerates every integer confusion matrix with the given class sizes and
// keeps those whose rounded rates match target percentages.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct Matrix {
    int tp, fn, fp, tn;
};

inline double pct(double num, double den) { return den == 0 ? 0.0 : 100.0 * num / den; }

inline double round1(double x) { return std::round(x * 10.0) / 10.0; }

// Matrices whose TPR and F1 round (one decimal) to the targets.
inline std::vector<Matrix> search_tpr_f1(int positives, int negatives, double tpr_pct, double f1_pct) {
    std::vector<Matrix> out;
    for (int tp = 0; tp <= positives; ++tp)
        for (int fp = 0; fp <= negatives; ++fp) {
            double tpr = pct(tp, positives);
            double prec = pct(tp, tp + fp);
            double f1 = (prec + tpr) == 0 ? 0.0 : 2 * prec * tpr / (prec + tpr);
            if (round1(tpr) == tpr_pct && round1(f1) == f1_pct) out.push_back({tp, positives - tp, fp, negatives - fp});
        }
    return out;
}

// Integer false-positive counts whose FPR rounds to the target.
inline std::vector<int> fp_for_fpr(int negatives, double fpr_pct) {
    std::vector<int> out;
    for (int fp = 0; fp <= negatives; ++fp)
        if (round1(pct(fp, negatives)) == fpr_pct) out.push_back(fp);
    return out;
}

} // namespace oracle
