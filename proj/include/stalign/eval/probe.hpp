#pragma once

// Linear probing on frozen embeddings: a single softmax layer over z-scored
// features (training-set mean and spread), fit by full-batch gradient descent
// on the logistic loss.
//
// Metrics on the test set:
//   acc  argmax accuracy (the 0.5 threshold when there are two classes)
//   auc  two classes: AUC of the positive-class probability;
//        more classes: one-vs-rest micro AUC over every (sample, class) score
//   f1   two classes: F1 of the positive class;
//        more classes: micro F1 from TP/FP/FN summed over classes

#include <cstddef>
#include <vector>

namespace stalign::eval {

struct ProbeMetrics {
    double acc = 0.0;
    double auc = 0.0;
    double f1 = 0.0;
};

struct ProbeOptions {
    std::size_t steps = 500;
    double lr = 0.1;
};

struct FeatureSet {
    std::size_t dim = 0;
    std::vector<float> rows;  // n x dim
    std::vector<int> labels;  // n, values 0..C-1

    std::size_t size() const { return labels.size(); }
};

/// Metrics plus the flattened test scores the AUC was computed from.
struct ProbeOutcome {
    ProbeMetrics metrics;
    std::vector<double> scores;
    std::vector<int> positive;
};

/// Throws DataError when the training labels hold a single class, and
/// ShapeError on inconsistent sizes.
ProbeOutcome fit_probe(const FeatureSet& train, const FeatureSet& test, const ProbeOptions& opts = {});
ProbeMetrics linear_probe(const FeatureSet& train, const FeatureSet& test, const ProbeOptions& opts = {});

/// Rank-based (Mann-Whitney) AUC with average ranks for ties. Throws DataError
/// if either class is absent.
double auc_rank(const std::vector<double>& scores, const std::vector<int>& positive);

}  // namespace stalign::eval
