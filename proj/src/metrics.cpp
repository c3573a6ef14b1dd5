#include "fd2cl/metrics.hpp"

#include <algorithm>
#include <cstddef>

namespace fd2cl::metrics {

double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold) {
    if (scores.empty() || scores.size() != labels.size())
        throw DataError("accuracy: empty input or size mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int pred = scores[i] >= threshold ? 1 : 0;
        if (pred == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

ThresholdPick select_threshold(const std::vector<double>& scores,
                               const std::vector<int>& labels) {
    if (scores.empty() || scores.size() != labels.size())
        throw DataError("select_threshold: empty input or size mismatch");
    std::vector<double> uniq = scores;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    // Midpoints between adjacent distinct scores enumerate every achievable
    // classification and transfer better than the observed scores themselves;
    // the outer candidates cover the all-positive and all-negative rules.
    std::vector<double> candidates;
    candidates.push_back(uniq.front() - 1.0);
    for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
        candidates.push_back(uniq[i] + (uniq[i + 1] - uniq[i]) / 2.0);
    candidates.push_back(uniq.back() + 1.0);

    ThresholdPick best{candidates.front(), -1.0};
    for (double t : candidates) {
        const double acc = accuracy(scores, labels, t);
        if (acc > best.accuracy) {
            best.accuracy = acc;
            best.threshold = t;
        }
    }
    return best;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DataError("auc: size mismatch");
    std::size_t pos = 0, neg = 0;
    for (int y : labels) (y == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw DataError("auc: needs both classes");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;  // stable within ties
    });

    // Average ranks over tie groups (1-based ranks).
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }

    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
    return u / (p * n);
}

void TaskMatrix::push_row(std::vector<double> row) {
    if (row.size() != rows_.size() + 1)
        throw StateError("TaskMatrix: row " + std::to_string(rows_.size()) +
                         " must have " + std::to_string(rows_.size() + 1) + " entries");
    for (double v : row)
        if (v < 0.0 || v > 1.0) throw StateError("TaskMatrix: entry outside [0,1]");
    rows_.push_back(std::move(row));
}

double TaskMatrix::at(int t, int i) const {
    if (t < 0 || t >= tasks() || i < 0 || i > t)
        throw StateError("TaskMatrix: index outside the lower triangle");
    return rows_[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
}

bool TaskMatrix::complete() const {
    if (rows_.empty()) return false;
    return rows_.back().size() == rows_.size();
}

double average_accuracy(const TaskMatrix& m) {
    if (!m.complete()) throw StateError("average_accuracy: final row incomplete");
    const auto& last = m.rows().back();
    double s = 0.0;
    for (double v : last) s += v;
    return s / static_cast<double>(last.size());
}

double average_forgetting(const TaskMatrix& m) {
    const int t = m.tasks();
    if (t < 2) throw StateError("average_forgetting: undefined for fewer than 2 tasks");
    if (!m.complete()) throw StateError("average_forgetting: final row incomplete");
    double s = 0.0;
    for (int i = 0; i < t - 1; ++i) s += m.at(i, i) - m.at(t - 1, i);
    return s / static_cast<double>(t - 1);
}

}  // namespace fd2cl::metrics
