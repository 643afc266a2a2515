#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pixeldoc {

// Unit-cost edit distance over Unicode scalar values (invalid UTF-8 bytes
// count as one replacement character each).
int levenshtein(std::string_view a, std::string_view b);

// Normalized-similarity score with the 0.5 threshold: per gold,
// s = 1 - dist/max(len) over lowercased, whitespace-collapsed strings;
// scores below the threshold clamp to 0; the best gold wins.
double anls(const std::string& prediction, const std::vector<std::string>& golds,
            double threshold = 0.5);

// 1 iff the prediction equals some gold after lowercasing, punctuation
// stripping, article (a/an/the) removal, and whitespace collapsing.
double exact_match(const std::string& prediction, const std::vector<std::string>& golds);

// Max over golds of the harmonic mean of token precision/recall, with
// multiset token overlap under the same normalization as exact_match.
double token_f1(const std::string& prediction, const std::vector<std::string>& golds);

struct EvalRecord {
    std::string prediction;
    std::vector<std::string> golds;
    std::map<std::string, double> scores;  // filled by evaluate_dataset
};

struct MetricSummary {
    double mean = 0.0;
    std::size_t n = 0;
};

// Scores every record under the named metrics ("anls", "em", "f1";
// "accuracy" is accepted as an alias of "em") and returns per-metric means.
std::map<std::string, MetricSummary> evaluate_dataset(std::vector<EvalRecord>& records,
                                                      const std::vector<std::string>& metrics);

// JSON report {metric: {mean, n}}.
std::string report_json(const std::map<std::string, MetricSummary>& report);

}  // namespace pixeldoc
