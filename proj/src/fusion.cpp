#include "ercfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "io_util.hpp"

namespace ercfuse {

std::string to_string(FusionMethod m) {
    switch (m) {
        case FusionMethod::WeightedAverage:
            return "weighted_average";
        case FusionMethod::Vote:
            return "vote";
    }
    return "unknown";
}

FusionMethod fusion_method_from_string(const std::string& s) {
    if (s == "weighted_average") {
        return FusionMethod::WeightedAverage;
    }
    if (s == "vote") {
        return FusionMethod::Vote;
    }
    throw FusionError("unknown fusion method '" + s + "'");
}

FusionSpec FusionSpec::equal_weights(std::vector<std::string> members) {
    FusionSpec spec;
    spec.method = FusionMethod::WeightedAverage;
    spec.weights.assign(members.size(), 1.0 / static_cast<double>(members.size()));
    spec.member_names = std::move(members);
    return spec;
}

FusionSpec FusionSpec::vote(std::vector<std::string> members) {
    FusionSpec spec;
    spec.method = FusionMethod::Vote;
    spec.member_names = std::move(members);
    return spec;
}

void check_weights(const std::vector<double>& weights, std::size_t n_members) {
    if (weights.size() != n_members) {
        throw FusionError("expected " + std::to_string(n_members) + " weights, got " + std::to_string(weights.size()));
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) {
            throw FusionError("fusion weight " + detail::format_double(w) + " is negative or non-finite");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw FusionError("fusion weights sum to " + detail::format_double(sum) + ", expected 1");
    }
}

void FusionSpec::validate() const {
    std::set<std::string> distinct(member_names.begin(), member_names.end());
    if (distinct.size() != member_names.size()) {
        throw FusionError("fusion member names must be distinct");
    }
    if (method == FusionMethod::Vote) {
        if (!weights.empty()) {
            throw FusionError("vote fusion takes no weights");
        }
        return;
    }
    check_weights(weights, member_names.size());
}

namespace {

void check_members(const std::vector<ProbabilityDistribution>& dists) {
    if (dists.size() < 2) {
        throw FusionError("fusion needs at least two members, got " + std::to_string(dists.size()));
    }
    for (const auto& d : dists) {
        if (d.size() != dists.front().size()) {
            throw FusionError("fusion members disagree on label count");
        }
    }
}

}  // namespace

ProbabilityDistribution weighted_average(const std::vector<ProbabilityDistribution>& dists,
                                         const std::vector<double>& weights) {
    check_members(dists);
    check_weights(weights, dists.size());
    std::vector<double> out(dists.front().size(), 0.0);
    for (std::size_t m = 0; m < dists.size(); ++m) {
        for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] += weights[m] * dists[m][c];
        }
    }
    for (double& v : out) {
        v = std::clamp(v, 0.0, 1.0);
    }
    return ProbabilityDistribution(std::move(out));
}

LabelIndex plurality_vote(const std::vector<ProbabilityDistribution>& dists) {
    check_members(dists);
    const std::size_t k = dists.front().size();
    std::vector<std::size_t> votes(k, 0);
    std::vector<double> mean(k, 0.0);
    for (const auto& d : dists) {
        ++votes[d.argmax()];
        for (std::size_t c = 0; c < k; ++c) {
            mean[c] += d[c];
        }
    }
    LabelIndex best = 0;
    for (LabelIndex c = 1; c < k; ++c) {
        if (votes[c] > votes[best] || (votes[c] == votes[best] && mean[c] > mean[best])) {
            best = c;
        }
    }
    return best;
}

namespace {

void check_tables(const std::vector<PredictionTable>& tables) {
    if (tables.size() < 2) {
        throw FusionError("fusion needs at least two prediction tables, got " + std::to_string(tables.size()));
    }
    const auto& first = tables.front();
    for (std::size_t t = 1; t < tables.size(); ++t) {
        if (!(tables[t].label_set == first.label_set)) {
            throw FusionError("prediction tables '" + first.model_name + "' and '" + tables[t].model_name +
                              "' have different label sets");
        }
        std::vector<std::string> diff;
        auto a = first.rows.begin();
        auto b = tables[t].rows.begin();
        while (a != first.rows.end() || b != tables[t].rows.end()) {
            if (b == tables[t].rows.end() || (a != first.rows.end() && a->first < b->first)) {
                diff.push_back(a++->first);
            } else if (a == first.rows.end() || b->first < a->first) {
                diff.push_back(b++->first);
            } else {
                ++a;
                ++b;
            }
        }
        if (!diff.empty()) {
            std::string msg = "prediction tables '" + first.model_name + "' and '" + tables[t].model_name +
                              "' cover different ids; symmetric difference (" + std::to_string(diff.size()) + "):";
            for (std::size_t i = 0; i < diff.size() && i < 20; ++i) {
                msg += " " + diff[i];
            }
            if (diff.size() > 20) {
                msg += " ...";
            }
            throw FusionError(msg);
        }
    }
}

}  // namespace

PredictionTable fuse_tables(const std::vector<PredictionTable>& tables, const FusionSpec& spec) {
    check_tables(tables);
    spec.validate();
    if (spec.member_names.size() != tables.size()) {
        throw FusionError("fusion spec names " + std::to_string(spec.member_names.size()) + " members for " +
                          std::to_string(tables.size()) + " tables");
    }

    PredictionTable out;
    out.label_set = tables.front().label_set;
    out.model_name = "ensemble[";
    for (std::size_t i = 0; i < spec.member_names.size(); ++i) {
        out.model_name += (i ? "+" : "") + spec.member_names[i];
    }
    out.model_name += ";" + to_string(spec.method) + "]";

    std::vector<ProbabilityDistribution> row(tables.size());
    for (const auto& [id, _] : tables.front().rows) {
        for (std::size_t t = 0; t < tables.size(); ++t) {
            row[t] = tables[t].rows.at(id);
        }
        if (spec.method == FusionMethod::Vote) {
            out.rows.emplace(id, ProbabilityDistribution::one_hot(out.label_set.size(), plurality_vote(row)));
        } else {
            out.rows.emplace(id, weighted_average(row, spec.weights));
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> simplex_grid(std::size_t parts, std::size_t units) {
    std::vector<std::vector<std::size_t>> out;
    if (parts == 0) {
        return out;
    }
    std::vector<std::size_t> cur(parts, 0);
    // Recursive descent from the largest value in each slot.
    auto rec = [&](auto&& self, std::size_t slot, std::size_t remaining) -> void {
        if (slot + 1 == parts) {
            cur[slot] = remaining;
            out.push_back(cur);
            return;
        }
        for (std::size_t v = remaining + 1; v-- > 0;) {
            cur[slot] = v;
            self(self, slot + 1, remaining - v);
        }
    };
    rec(rec, 0, units);
    return out;
}

WeightSearchResult search_weights(const std::vector<PredictionTable>& tables,
                                  const std::map<std::string, LabelIndex>& gold, double step) {
    if (!(step > 0.0 && step <= 0.5)) {
        throw FusionError("weight search step must lie in (0, 0.5], got " + detail::format_double(step));
    }
    check_tables(tables);
    for (const auto& [id, _] : tables.front().rows) {
        if (gold.count(id) == 0) {
            throw FusionError("gold labels do not cover id '" + id + "'");
        }
    }
    if (tables.front().rows.empty()) {
        throw FusionError("weight search over empty tables");
    }

    const auto units = static_cast<std::size_t>(std::floor(1.0 / step + 1e-9));
    const auto grid = simplex_grid(tables.size(), units);
    const std::size_t k = tables.front().label_set.size();
    const auto n = static_cast<double>(tables.front().rows.size());

    WeightSearchResult best;
    best.candidates = grid.size();
    best.accuracy = -1.0;
    std::vector<double> fused(k);
    for (const auto& counts : grid) {
        std::vector<double> w(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) {
            w[i] = static_cast<double>(counts[i]) / static_cast<double>(units);
        }
        std::size_t correct = 0;
        for (const auto& [id, _] : tables.front().rows) {
            std::fill(fused.begin(), fused.end(), 0.0);
            for (std::size_t t = 0; t < tables.size(); ++t) {
                const auto& p = tables[t].rows.at(id);
                for (std::size_t c = 0; c < k; ++c) {
                    fused[c] += w[t] * p[c];
                }
            }
            const auto pred = static_cast<LabelIndex>(std::max_element(fused.begin(), fused.end()) - fused.begin());
            correct += pred == gold.at(id) ? 1 : 0;
        }
        const double acc = static_cast<double>(correct) / n;
        // Grid is in descending lexicographic order: first strict improvement wins ties.
        if (acc > best.accuracy) {
            best.accuracy = acc;
            best.weights = std::move(w);
        }
    }
    return best;
}

}  // namespace ercfuse
