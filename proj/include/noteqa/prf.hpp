#pragma once

#include <set>
#include <vector>

namespace noteqa::prf {

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricBlock {
    Prf micro;
    Prf macro;
};

struct Counts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

inline Counts count(const std::set<int>& predicted, const std::set<int>& gold) {
    Counts c;
    for (int id : predicted)
        gold.count(id) ? ++c.tp : ++c.fp;
    for (int id : gold)
        if (!predicted.count(id)) ++c.fn;
    return c;
}

// Per-case convention: an empty gold set is scored 1.0 against an empty
// prediction and 0.0 against any non-empty one.
inline Prf from_counts(const Counts& c) {
    Prf p;
    bool gold_empty = c.tp + c.fn == 0;
    bool pred_empty = c.tp + c.fp == 0;
    p.precision = pred_empty ? (gold_empty ? 1.0 : 0.0)
                             : static_cast<double>(c.tp) / (c.tp + c.fp);
    p.recall = gold_empty ? (pred_empty ? 1.0 : 0.0)
                          : static_cast<double>(c.tp) / (c.tp + c.fn);
    p.f1 = (gold_empty && pred_empty)
               ? 1.0
               : 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
    return p;
}

// Micro from pooled counts, macro as the unweighted mean of per-case scores.
inline MetricBlock evaluate(const std::vector<std::pair<std::set<int>, std::set<int>>>&
                                predicted_gold_pairs) {
    MetricBlock block;
    Counts pooled;
    double sum_p = 0, sum_r = 0, sum_f = 0;
    for (const auto& [predicted, gold] : predicted_gold_pairs) {
        Counts c = count(predicted, gold);
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.fn += c.fn;
        Prf per_case = from_counts(c);
        sum_p += per_case.precision;
        sum_r += per_case.recall;
        sum_f += per_case.f1;
    }
    block.micro = from_counts(pooled);
    size_t n = predicted_gold_pairs.size();
    if (n > 0) {
        block.macro.precision = sum_p / n;
        block.macro.recall = sum_r / n;
        block.macro.f1 = sum_f / n;
    }
    return block;
}

}  // namespace noteqa::prf
