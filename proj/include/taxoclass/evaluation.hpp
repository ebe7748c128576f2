#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "taxoclass/errors.hpp"
#include "taxoclass/json_lines.hpp"

namespace taxoclass {

/// One SME verdict on one method's labels for one document. The method is a
/// free-form name so baselines and ablation variants can be judged too.
struct Judgment {
    std::string doc_id;
    std::string method;
    bool correct = false;
    int score = 0;
    std::optional<std::string> rationale;
};

inline Judgment judgment_from_json(const json& j, std::size_t line) {
    if (!j.is_object()) throw ParseError("expected a JSON object", line);
    Judgment out;
    out.doc_id = required_string(j, "doc_id", line);
    out.method = required_string(j, "method", line);
    if (!j.contains("correct") || !j["correct"].is_boolean()) throw ParseError("'correct' must be a boolean", line);
    out.correct = j["correct"].get<bool>();
    if (!j.contains("score") || !j["score"].is_number_integer())
        throw ParseError("'score' must be an integer", line);
    auto score = j["score"].get<std::int64_t>();
    if (score < 1 || score > 5)
        throw ValidationError("line " + std::to_string(line) + ": score " + std::to_string(score) + " outside 1-5");
    out.score = static_cast<int>(score);
    out.rationale = optional_string(j, "rationale", line);
    return out;
}

inline std::vector<Judgment> load_judgments(std::istream& in) {
    std::vector<Judgment> out;
    std::set<std::pair<std::string, std::string>> seen;
    for_each_json_line(in, [&](const json& j, std::size_t line) {
        auto jd = judgment_from_json(j, line);
        if (!seen.emplace(jd.doc_id, jd.method).second)
            throw ValidationError("line " + std::to_string(line) + ": duplicate judgment for (" + jd.doc_id + ", " +
                                  jd.method + ")");
        out.push_back(std::move(jd));
    });
    return out;
}

inline std::vector<Judgment> load_judgments_file(const std::string& path) {
    auto in = open_input(path);
    return load_judgments(in);
}

/// Percentage of `count` out of `n`, in tenths of a percent, rounded half-up.
/// Integer arithmetic keeps x.x5 boundaries exact.
inline std::int64_t percent_tenths(std::int64_t count, std::int64_t n) {
    if (n <= 0) throw DomainError("percentage of an empty set");
    return (2000 * count + n) / (2 * n);
}

inline std::string format_tenths(std::int64_t t) {
    std::string sign = t < 0 ? "-" : "";
    if (t < 0) t = -t;
    return sign + std::to_string(t / 10) + "." + std::to_string(t % 10);
}

/// Accuracy and score distribution for one method. Percentages are held in
/// tenths so that printing and comparison are exact.
struct MethodReport {
    std::string method;
    std::size_t n = 0;
    std::int64_t accuracy_tenths = 0;
    std::array<std::int64_t, 5> score_tenths{}; // index 0 is score 1

    double accuracy_pct() const { return static_cast<double>(accuracy_tenths) / 10.0; }
    double score_pct(int score) const { return static_cast<double>(score_tenths.at(score - 1)) / 10.0; }
    std::map<int, double> score_dist_pct() const {
        std::map<int, double> m;
        for (int s = 1; s <= 5; ++s) m[s] = score_pct(s);
        return m;
    }
    bool operator==(const MethodReport&) const = default;
};

/// Report for a single method from raw counts.
inline MethodReport make_report(std::string method, std::size_t n, std::size_t correct,
                                const std::array<std::size_t, 5>& score_counts) {
    if (n == 0) throw DomainError("no judgments for method '" + method + "'");
    MethodReport r;
    r.method = std::move(method);
    r.n = n;
    r.accuracy_tenths = percent_tenths(static_cast<std::int64_t>(correct), static_cast<std::int64_t>(n));
    for (std::size_t s = 0; s < 5; ++s)
        r.score_tenths[s] = percent_tenths(static_cast<std::int64_t>(score_counts[s]), static_cast<std::int64_t>(n));
    return r;
}

inline MethodReport compute_metrics(std::span<const Judgment> judgments, const std::string& method) {
    std::size_t n = 0, correct = 0;
    std::array<std::size_t, 5> counts{};
    for (const auto& j : judgments) {
        if (j.method != method) continue;
        if (j.score < 1 || j.score > 5) throw ValidationError("score outside 1-5 for " + j.doc_id);
        ++n;
        correct += j.correct;
        ++counts[static_cast<std::size_t>(j.score - 1)];
    }
    return make_report(method, n, correct, counts);
}

/// One report per method present, in method-name order.
inline std::vector<MethodReport> compute_metrics(std::span<const Judgment> judgments) {
    std::set<std::string> methods;
    for (const auto& j : judgments) methods.insert(j.method);
    if (methods.empty()) throw DomainError("no judgments");
    std::vector<MethodReport> out;
    for (const auto& m : methods) out.push_back(compute_metrics(judgments, m));
    return out;
}

/// Rows by accuracy descending, then S-5 descending, then method name.
inline std::vector<MethodReport> compare_methods(std::vector<MethodReport> reports) {
    std::sort(reports.begin(), reports.end(), [](const MethodReport& a, const MethodReport& b) {
        if (a.accuracy_tenths != b.accuracy_tenths) return a.accuracy_tenths > b.accuracy_tenths;
        if (a.score_tenths[4] != b.score_tenths[4]) return a.score_tenths[4] > b.score_tenths[4];
        return a.method < b.method;
    });
    return reports;
}

/// Whether a higher value is better for column "Accuracy" or "S-<i>".
inline bool higher_is_better(int score) { return score >= 3; }

inline std::string render_table(std::span<const MethodReport> rows) {
    std::size_t width = 6;
    for (const auto& r : rows) width = std::max(width, r.method.size());
    auto pad = [](std::string s, std::size_t w, bool left) {
        if (s.size() >= w) return s;
        return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
    };
    std::ostringstream out;
    out << pad("method", width, true) << ' ' << pad("n", 5, false) << ' ' << "Accuracy%(up)";
    for (int s = 5; s >= 1; --s) out << ' ' << "S-" << s << "%(" << (higher_is_better(s) ? "up" : "dn") << ')';
    out << '\n';
    for (const auto& r : rows) {
        out << pad(r.method, width, true) << ' ' << pad(std::to_string(r.n), 5, false) << ' '
            << pad(format_tenths(r.accuracy_tenths), 13, false);
        for (int s = 5; s >= 1; --s) out << ' ' << pad(format_tenths(r.score_tenths[s - 1]), 9, false);
        out << '\n';
    }
    out << "(up: higher is better; dn: lower is better)\n";
    return out.str();
}

inline ordered_json report_to_json(const MethodReport& r) {
    ordered_json j;
    j["method"] = r.method;
    j["n"] = r.n;
    j["accuracy_pct"] = r.accuracy_pct();
    ordered_json dist;
    for (int s = 5; s >= 1; --s) dist[std::to_string(s)] = r.score_pct(s);
    j["score_dist_pct"] = std::move(dist);
    return j;
}

inline ordered_json comparison_to_json(std::span<const MethodReport> rows) {
    ordered_json j;
    j["columns"] = {"accuracy_pct", "S-5", "S-4", "S-3", "S-2", "S-1"};
    j["higher_is_better"] = {true, true, true, true, false, false};
    auto arr = ordered_json::array();
    for (const auto& r : rows) arr.push_back(report_to_json(r));
    j["rows"] = std::move(arr);
    return j;
}

inline MethodReport report_from_json(const json& j) {
    try {
        MethodReport r;
        r.method = j.at("method").get<std::string>();
        r.n = j.at("n").get<std::size_t>();
        auto tenths = [](double pct) {
            if (pct < 0.0 || pct > 100.0) throw ValidationError("percentage outside 0-100");
            return static_cast<std::int64_t>(pct * 10.0 + 0.5);
        };
        r.accuracy_tenths = tenths(j.at("accuracy_pct").get<double>());
        const auto& dist = j.at("score_dist_pct");
        for (int s = 1; s <= 5; ++s) r.score_tenths[s - 1] = tenths(dist.at(std::to_string(s)).get<double>());
        return r;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed report: ") + e.what());
    }
}

/// Accepts either a single report object, an array of them, or a comparison
/// document with a "rows" array.
inline std::vector<MethodReport> load_reports(std::istream& in) {
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), 1);
    }
    std::vector<MethodReport> out;
    const json* arr = &j;
    if (j.is_object() && j.contains("rows")) arr = &j["rows"];
    if (arr->is_array()) {
        for (const auto& r : *arr) out.push_back(report_from_json(r));
    } else {
        out.push_back(report_from_json(*arr));
    }
    return out;
}

inline std::vector<MethodReport> load_reports_file(const std::string& path) {
    auto in = open_input(path);
    return load_reports(in);
}

} // namespace taxoclass
