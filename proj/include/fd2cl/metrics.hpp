#ifndef FD2CL_METRICS_HPP
#define FD2CL_METRICS_HPP

#include <vector>

#include "fd2cl/errors.hpp"

namespace fd2cl::metrics {

// Fraction of samples where (score >= threshold) equals the label.
double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold);

// Threshold maximizing accuracy on (scores, labels); ties resolve to the
// lowest candidate threshold.
struct ThresholdPick {
    double threshold = 0.5;
    double accuracy = 0.0;
};
ThresholdPick select_threshold(const std::vector<double>& scores,
                               const std::vector<int>& labels);

// Mann-Whitney AUC via rank sums with average ranks for ties.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Lower-triangular accuracy matrix: row t holds accuracy on tasks 0..t after
// training task t.
class TaskMatrix {
public:
    void push_row(std::vector<double> row);
    int tasks() const { return static_cast<int>(rows_.size()); }
    double at(int t, int i) const;
    const std::vector<std::vector<double>>& rows() const { return rows_; }
    bool complete() const;

private:
    std::vector<std::vector<double>> rows_;
};

// Mean of the final row: (1/T) * sum_i a_{T,i}.
double average_accuracy(const TaskMatrix& m);

// (1/(T-1)) * sum_{i<T} (a_{i,i} - a_{T,i}); may be negative.
double average_forgetting(const TaskMatrix& m);

}  // namespace fd2cl::metrics

#endif
