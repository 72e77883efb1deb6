#include "matchdid/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "matchdid/errors.hpp"

namespace matchdid::cli {

namespace {

std::string trimmed(const std::string &s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_fields(const std::string &line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trimmed(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string &text, const std::string &path, int line,
                    const std::string &what) {
    const std::string t = trimmed(text);
    if (!t.empty()) {
        char *end = nullptr;
        errno = 0;
        const double v = std::strtod(t.c_str(), &end);
        if (end == t.c_str() + t.size() && errno == 0 && std::isfinite(v)) return v;
    }
    throw ValidationError(path + ":" + std::to_string(line) + ": " + what +
                          " must be a finite number, got '" + text + "'");
}

bool parse_flag(const std::string &text, const std::string &path, int line,
                const std::string &what) {
    const std::string t = trimmed(text);
    if (t == "0") return false;
    if (t == "1") return true;
    throw ValidationError(path + ":" + std::to_string(line) + ": " + what +
                          " must be 0 or 1, got '" + text + "'");
}

}  // namespace

CsvFile read_csv(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open file");
    CsvFile out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trimmed(line).empty()) continue;
        auto fields = split_fields(line);
        if (out.header.empty()) {
            out.header = std::move(fields);
        } else {
            if (fields.size() != out.header.size())
                throw ValidationError(path + ":" + std::to_string(line_no) + ": expected " +
                                      std::to_string(out.header.size()) + " fields, got " +
                                      std::to_string(fields.size()));
            out.rows.push_back(std::move(fields));
        }
    }
    if (out.header.empty()) throw ValidationError(path + ": file is empty");
    return out;
}

matching::CovariateSample read_covariate_csv(const std::string &path) {
    const CsvFile csv = read_csv(path);
    if (csv.header.size() < 3 || csv.header[0] != "unit_id" || csv.header[1] != "treated")
        throw ValidationError(path +
                              ":1: header must be unit_id,treated,<covariate>... with at least "
                              "one covariate column");
    if (csv.rows.empty()) throw ValidationError(path + ": no data rows");

    matching::CovariateSample sample;
    const int d = static_cast<int>(csv.header.size()) - 2;
    const int n = static_cast<int>(csv.rows.size());
    sample.covariate_names.assign(csv.header.begin() + 2, csv.header.end());
    sample.covariates = Matrix(n, d);
    sample.treated.resize(n);
    sample.unit_ids.resize(n);
    std::unordered_set<std::string> seen;
    for (int i = 0; i < n; ++i) {
        const auto &row = csv.rows[i];
        const int line = i + 2;
        if (row[0].empty())
            throw ValidationError(path + ":" + std::to_string(line) + ": empty unit_id");
        if (!seen.insert(row[0]).second)
            throw ValidationError(path + ":" + std::to_string(line) + ": duplicate unit_id '" +
                                  row[0] + "'");
        sample.unit_ids[i] = row[0];
        sample.treated[i] = parse_flag(row[1], path, line, "treated");
        for (int j = 0; j < d; ++j)
            sample.covariates(i, j) =
                parse_double(row[2 + j], path, line, "covariate " + sample.covariate_names[j]);
    }
    return sample;
}

int LabeledPanel::period_ordinal(const std::string &label) const {
    for (std::size_t i = 0; i < period_labels.size(); ++i)
        if (period_labels[i] == label) return static_cast<int>(i);
    return -1;
}

LabeledPanel read_panel_csv(const std::string &path,
                            const std::vector<std::string> &period_order) {
    const CsvFile csv = read_csv(path);
    const std::vector<std::string> expected = {"unit_id", "group", "period", "outcome"};
    if (csv.header != expected)
        throw ValidationError(path + ":1: header must be unit_id,group,period,outcome");
    if (csv.rows.empty()) throw ValidationError(path + ": no data rows");

    LabeledPanel out;
    out.period_labels = period_order;
    std::unordered_map<std::string, int> ordinal;
    for (std::size_t i = 0; i < period_order.size(); ++i)
        ordinal[period_order[i]] = static_cast<int>(i);

    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        const auto &row = csv.rows[i];
        const int line = static_cast<int>(i) + 2;
        if (row[0].empty())
            throw ValidationError(path + ":" + std::to_string(line) + ": empty unit_id");
        if (row[2].empty())
            throw ValidationError(path + ":" + std::to_string(line) + ": empty period");
        auto it = ordinal.find(row[2]);
        if (it == ordinal.end()) {
            if (!period_order.empty())
                throw ValidationError(path + ":" + std::to_string(line) + ": period '" + row[2] +
                                      "' is not in the given period order");
            it = ordinal.emplace(row[2], static_cast<int>(out.period_labels.size())).first;
            out.period_labels.push_back(row[2]);
        }
        did::PanelRecord rec;
        rec.unit_id = row[0];
        rec.treated_group = parse_flag(row[1], path, line, "group");
        rec.period = it->second;
        rec.outcome = parse_double(row[3], path, line, "outcome");
        out.panel.records.push_back(std::move(rec));
    }
    return out;
}

std::vector<PairRow> read_pairs_csv(const std::string &path) {
    const CsvFile csv = read_csv(path);
    if (csv.header.size() < 2 || csv.header[0] != "treated_id" || csv.header[1] != "control_id")
        throw ValidationError(path + ":1: header must start with treated_id,control_id");
    if (csv.rows.empty()) throw ValidationError(path + ": no data rows");

    std::vector<PairRow> out;
    std::unordered_set<std::string> seen_treated, seen_control;
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        const auto &row = csv.rows[i];
        const int line = static_cast<int>(i) + 2;
        if (row[0].empty() || row[1].empty())
            throw ValidationError(path + ":" + std::to_string(line) + ": empty id");
        if (!seen_treated.insert(row[0]).second)
            throw ValidationError(path + ":" + std::to_string(line) + ": treated_id '" + row[0] +
                                  "' appears more than once");
        if (!seen_control.insert(row[1]).second)
            throw ValidationError(path + ":" + std::to_string(line) + ": control_id '" + row[1] +
                                  "' appears more than once");
        out.push_back({row[0], row[1]});
    }
    return out;
}

void write_text_atomic(const std::string &path, const std::string &content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(tmp + ": cannot open for writing");
        out << content;
        out.flush();
        if (!out) throw std::runtime_error(tmp + ": write failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw std::runtime_error(path + ": rename failed: " + ec.message());
    }
}

std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace matchdid::cli
