#include "pixeldoc/metrics.hpp"

#include <algorithm>

#include "json.hpp"
#include "pixeldoc/common.hpp"
#include "pixeldoc/utf8.hpp"

namespace pixeldoc {

namespace {

// ASCII-only classifiers: the <cctype> versions are locale-sensitive for
// bytes >= 0x80, which would make scores machine-dependent.
bool ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool ascii_punct(char c) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
}
char ascii_lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

// lowercase + trim + collapse runs of whitespace to single spaces
std::string squeeze_lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (ascii_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(ascii_lower(c));
    }
    return out;
}

// SQuAD answer normalization: lowercase, drop punctuation, drop the articles
// a/an/the, collapse whitespace.
std::string squad_normalize(std::string_view s) {
    std::string lowered;
    lowered.reserve(s.size());
    for (char c : s) {
        if (ascii_punct(c)) continue;
        lowered.push_back(ascii_lower(c));
    }
    std::string out;
    std::size_t i = 0;
    while (i < lowered.size()) {
        while (i < lowered.size() && ascii_space(lowered[i])) ++i;
        std::size_t start = i;
        while (i < lowered.size() && !ascii_space(lowered[i])) ++i;
        std::string word = lowered.substr(start, i - start);
        if (word.empty() || word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += word;
    }
    return out;
}

std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ') ++i;
        std::size_t start = i;
        while (i < s.size() && s[i] != ' ') ++i;
        if (i > start) tokens.push_back(s.substr(start, i - start));
    }
    return tokens;
}

}  // namespace

int levenshtein(std::string_view a, std::string_view b) {
    std::u32string ua = utf8_decode(a);
    std::u32string ub = utf8_decode(b);
    const std::size_t m = ua.size(), n = ub.size();
    std::vector<int> prev(n + 1), cur(n + 1);
    for (std::size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= m; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= n; ++j) {
            int sub = prev[j - 1] + (ua[i - 1] == ub[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

double anls(const std::string& prediction, const std::vector<std::string>& golds,
            double threshold) {
    if (golds.empty()) throw_data("anls needs at least one gold answer");
    const std::string p = squeeze_lower(prediction);
    double best = 0.0;
    for (const auto& gold : golds) {
        const std::string g = squeeze_lower(gold);
        double s;
        if (p.empty() && g.empty()) {
            s = 1.0;
        } else {
            // distance and lengths over codepoints, not bytes
            const auto len = std::max(utf8_decode(p).size(), utf8_decode(g).size());
            s = 1.0 - static_cast<double>(levenshtein(p, g)) / static_cast<double>(len);
        }
        if (s < threshold) s = 0.0;
        best = std::max(best, s);
    }
    return best;
}

double exact_match(const std::string& prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) throw_data("exact_match needs at least one gold answer");
    const std::string p = squad_normalize(prediction);
    for (const auto& gold : golds)
        if (p == squad_normalize(gold)) return 1.0;
    return 0.0;
}

double token_f1(const std::string& prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) throw_data("token_f1 needs at least one gold answer");
    const auto pred_tokens = split_tokens(squad_normalize(prediction));
    double best = 0.0;
    for (const auto& gold : golds) {
        const auto gold_tokens = split_tokens(squad_normalize(gold));
        if (pred_tokens.empty() && gold_tokens.empty()) {
            best = 1.0;
            continue;
        }
        if (pred_tokens.empty() || gold_tokens.empty()) continue;
        std::map<std::string, int> counts;
        for (const auto& t : gold_tokens) ++counts[t];
        int overlap = 0;
        for (const auto& t : pred_tokens) {
            auto it = counts.find(t);
            if (it != counts.end() && it->second > 0) {
                --it->second;
                ++overlap;
            }
        }
        if (overlap == 0) continue;
        const double precision = static_cast<double>(overlap) / pred_tokens.size();
        const double recall = static_cast<double>(overlap) / gold_tokens.size();
        best = std::max(best, 2.0 * precision * recall / (precision + recall));
    }
    return best;
}

std::map<std::string, MetricSummary> evaluate_dataset(std::vector<EvalRecord>& records,
                                                      const std::vector<std::string>& metrics) {
    if (records.empty()) throw_data("no records to evaluate");
    if (metrics.empty()) throw_data("no metrics requested");

    using MetricFn = double (*)(const std::string&, const std::vector<std::string>&);
    auto resolve = [](const std::string& name) -> MetricFn {
        if (name == "anls") return [](const std::string& p, const std::vector<std::string>& g) {
            return anls(p, g);
        };
        if (name == "em" || name == "accuracy") return &exact_match;
        if (name == "f1") return &token_f1;
        throw_data("unknown metric '" + name + "'");
    };

    std::map<std::string, MetricSummary> report;
    for (const auto& name : metrics) {
        MetricFn fn = resolve(name);
        MetricSummary summary;
        for (auto& rec : records) {
            if (rec.golds.empty()) throw_data("record with no gold answers");
            const double score = fn(rec.prediction, rec.golds);
            rec.scores[name] = score;
            summary.mean += score;
            ++summary.n;
        }
        summary.mean /= static_cast<double>(summary.n);
        report[name] = summary;
    }
    return report;
}

std::string report_json(const std::map<std::string, MetricSummary>& report) {
    nlohmann::json j;
    for (const auto& [name, summary] : report) {
        j[name] = {{"mean", summary.mean}, {"n", summary.n}};
    }
    return j.dump(2);
}

}  // namespace pixeldoc
