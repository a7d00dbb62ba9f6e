#include "stalign/eval/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "stalign/errors.hpp"

namespace stalign::eval {

double auc_rank(const std::vector<double>& scores, const std::vector<int>& positive) {
    if (scores.size() != positive.size()) throw ShapeError("auc: scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * double(i + 1 + j);  // ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            if (positive[order[k]]) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auc: need both positive and negative samples");
    return (pos_rank_sum - double(n_pos) * double(n_pos + 1) / 2.0) / (double(n_pos) * double(n_neg));
}

ProbeOutcome fit_probe(const FeatureSet& train, const FeatureSet& test, const ProbeOptions& opts) {
    const std::size_t d = train.dim;
    for (const FeatureSet* s : {&train, &test}) {
        if (s->rows.size() != s->size() * d || s->dim != d) throw ShapeError("linear probe: feature matrix shape mismatch");
        if (s->size() == 0) throw DataError("linear probe: empty feature set");
        for (int y : s->labels)
            if (y < 0) throw DataError("linear probe: negative label");
    }
    const std::set<int> train_classes(train.labels.begin(), train.labels.end());
    if (train_classes.size() < 2) throw DataError("linear probe: training labels hold a single class");
    int max_label = *train_classes.rbegin();
    for (int y : test.labels) max_label = std::max(max_label, y);
    const std::size_t C = static_cast<std::size_t>(max_label) + 1;
    const std::size_t n = train.size();

    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mu[j] += train.rows[i * d + j];
    for (auto& m : mu) m /= double(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) sd[j] += (train.rows[i * d + j] - mu[j]) * (train.rows[i * d + j] - mu[j]);
    for (auto& s : sd) s = std::sqrt(s / double(n)) + 1e-8;
    auto standardize = [&](const FeatureSet& s) {
        std::vector<double> x(s.rows.size());
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) x[i * d + j] = (s.rows[i * d + j] - mu[j]) / sd[j];
        return x;
    };
    const auto xtr = standardize(train), xte = standardize(test);

    std::vector<double> w(d * C, 0.0), b(C, 0.0);
    auto predict = [&](const std::vector<double>& x, std::size_t i, std::vector<double>& p) {
        double mx = -1e300;
        for (std::size_t c = 0; c < C; ++c) {
            double z = b[c];
            for (std::size_t j = 0; j < d; ++j) z += x[i * d + j] * w[j * C + c];
            p[c] = z;
            mx = std::max(mx, z);
        }
        double s = 0.0;
        for (auto& v : p) s += (v = std::exp(v - mx));
        for (auto& v : p) v /= s;
    };

    std::vector<double> p(C), gw(d * C), gb(C);
    for (std::size_t step = 0; step < opts.steps; ++step) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            predict(xtr, i, p);
            p[static_cast<std::size_t>(train.labels[i])] -= 1.0;
            for (std::size_t c = 0; c < C; ++c) {
                gb[c] += p[c];
                for (std::size_t j = 0; j < d; ++j) gw[j * C + c] += xtr[i * d + j] * p[c];
            }
        }
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= opts.lr * gw[k] / double(n);
        for (std::size_t c = 0; c < C; ++c) b[c] -= opts.lr * gb[c] / double(n);
    }

    const std::size_t m = test.size();
    std::vector<double> flat_scores;
    std::vector<int> flat_pos;
    std::vector<std::size_t> tp(C, 0), fp(C, 0), fn(C, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < m; ++i) {
        predict(xte, i, p);
        const auto pred = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        const auto truth = static_cast<std::size_t>(test.labels[i]);
        correct += pred == truth;
        if (pred == truth) {
            ++tp[truth];
        } else {
            ++fp[pred];
            ++fn[truth];
        }
        if (C == 2) {
            flat_scores.push_back(p[1]);
            flat_pos.push_back(truth == 1);
        } else {
            for (std::size_t c = 0; c < C; ++c) {
                flat_scores.push_back(p[c]);
                flat_pos.push_back(truth == c);
            }
        }
    }

    ProbeMetrics out;
    out.acc = double(correct) / double(m);
    out.auc = auc_rank(flat_scores, flat_pos);
    auto f1 = [](double t, double f_p, double f_n) { return t == 0.0 ? 0.0 : 2.0 * t / (2.0 * t + f_p + f_n); };
    if (C == 2) {
        out.f1 = f1(double(tp[1]), double(fp[1]), double(fn[1]));
    } else {
        double t = 0, f_p = 0, f_n = 0;
        for (std::size_t c = 0; c < C; ++c) {
            t += double(tp[c]);
            f_p += double(fp[c]);
            f_n += double(fn[c]);
        }
        out.f1 = f1(t, f_p, f_n);
    }
    return {out, std::move(flat_scores), std::move(flat_pos)};
}

ProbeMetrics linear_probe(const FeatureSet& train, const FeatureSet& test, const ProbeOptions& opts) {
    return fit_probe(train, test, opts).metrics;
}

}  // namespace stalign::eval
