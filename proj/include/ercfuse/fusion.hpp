#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ercfuse/classifiers.hpp"

namespace ercfuse {

enum class FusionMethod { WeightedAverage, Vote };

std::string to_string(FusionMethod m);
FusionMethod fusion_method_from_string(const std::string& s);

struct FusionSpec {
    FusionMethod method = FusionMethod::WeightedAverage;
    std::vector<double> weights;  // empty for Vote
    std::vector<std::string> member_names;

    static FusionSpec equal_weights(std::vector<std::string> members);
    static FusionSpec vote(std::vector<std::string> members);

    // Non-negative weights summing to 1 within 1e-9, one per distinct member.
    void validate() const;
};

// Throws FusionError unless weights are non-negative and sum to 1 within 1e-9.
void check_weights(const std::vector<double>& weights, std::size_t n_members);

/// Componentwise convex combination, clamped to [0, 1].
ProbabilityDistribution weighted_average(const std::vector<ProbabilityDistribution>& dists,
                                         const std::vector<double>& weights);

/// Each member votes its argmax. Ties on votes go to the highest mean
/// probability among the tied labels, then to the lowest label index.
LabelIndex plurality_vote(const std::vector<ProbabilityDistribution>& dists);

/// Row-wise fusion. Tables must share the label set and the exact id set.
/// Vote rows come out one-hot. Output name: "ensemble[<m1>+<m2>...;<method>]".
PredictionTable fuse_tables(const std::vector<PredictionTable>& tables, const FusionSpec& spec);

struct WeightSearchResult {
    std::vector<double> weights;
    double accuracy = 0.0;
    std::size_t candidates = 0;
};

/// Exhaustive search over the weight simplex at resolution 1/K with
/// K = floor(1/step), so every unit-weight corner is a candidate. The
/// best-accuracy candidate wins; ties go to the lexicographically largest
/// weight vector (largest first weight first).
WeightSearchResult search_weights(const std::vector<PredictionTable>& tables,
                                  const std::map<std::string, LabelIndex>& gold, double step);

// All compositions of `units` into `parts` non-negative integers, in
// lexicographically descending order.
std::vector<std::vector<std::size_t>> simplex_grid(std::size_t parts, std::size_t units);

}  // namespace ercfuse
