#pragma once

#include <string>
#include <vector>

#include "matchdid/did.hpp"
#include "matchdid/matching.hpp"

namespace matchdid::cli {

// Simple comma-separated files: one header line, no quoting or escaping.
// All readers throw ValidationError with 1-based line numbers on schema
// violations.
struct CsvFile {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // rows[i] came from line i + 2
};

CsvFile read_csv(const std::string &path);

// Covariate file: header `unit_id,treated,<name>...` with at least one
// covariate column; treated is 0 or 1; covariate cells are finite numbers;
// unit ids are unique.
matching::CovariateSample read_covariate_csv(const std::string &path);

// Panel file: header `unit_id,group,period,outcome`; group is 0 or 1;
// period is an arbitrary label mapped to an ordinal. When period_order is
// empty, labels are ordered by first appearance; otherwise every label in
// the file must appear in period_order, whose order defines the ordinals.
struct LabeledPanel {
    did::PanelDataset panel;
    std::vector<std::string> period_labels;  // index = ordinal

    // Ordinal of a label, or -1 when the label is unknown.
    int period_ordinal(const std::string &label) const;
};

LabeledPanel read_panel_csv(const std::string &path, const std::vector<std::string> &period_order);

// Pairs file: header `treated_id,control_id` with optional extra columns
// (ignored). Each treated id appears exactly once and no control id is
// reused, so the file describes a 1:1 matching.
struct PairRow {
    std::string treated_id;
    std::string control_id;
};

std::vector<PairRow> read_pairs_csv(const std::string &path);

// Writes content to path via a temporary file and rename, so a failed or
// interrupted write never leaves a partial file at path.
void write_text_atomic(const std::string &path, const std::string &content);

// Shortest-round-trip style formatting for output tables: %.10g, with NaN
// rendered as NA.
std::string format_double(double v);

}  // namespace matchdid::cli
