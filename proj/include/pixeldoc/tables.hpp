#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pixeldoc/common.hpp"

namespace pixeldoc {

// Rectangular table with a mandatory single-row header and optional caption.
// Data rows are addressed 1-indexed in questions and queries; the header row
// is never counted.
struct TableSpec {
    std::optional<std::string> caption;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int n_rows() const { return static_cast<int>(rows.size()); }
    int n_cols() const { return static_cast<int>(header.size()); }

    // Throws a data error when the table is not rectangular, has empty
    // cells, or has duplicate header names.
    void validate() const;
};

enum class AnswerKind { cell_lookup, row_count, col_count, caption };

struct QATemplate {
    int id;  // 1..11
    const char* pattern;
    AnswerKind answer_kind;
};

const std::array<QATemplate, 11>& qa_templates();

// Machine-readable description of what a question asks for, resolved against
// the table structure rather than the question text. Which fields are
// meaningful depends on kind.
struct TableQuery {
    enum class Kind {
        cell_by_row_col,        // row, col
        cell_by_col_name,       // column_name, row
        cell_by_ordinal_entry,  // col + entry/entry_col ("the row containing X")
        cell_by_key,            // key in column 1 -> value in column 2
        row_count,
        col_count,
        caption,
    };

    Kind kind = Kind::row_count;
    int row = 0;  // 1-indexed data row
    int col = 0;  // 1-indexed column
    std::string column_name;
    std::string entry;  // unique cell value identifying a row
    int entry_col = 0;  // 1-indexed column the entry lives in
    std::string key;    // unique column-1 value
};

struct QAPair {
    std::string question;
    std::string answer;
    TableSpec table;
    int template_id = 0;
    TableQuery provenance;
};

struct TableLimits {
    int max_rows = 6;  // data rows, uniform in [1, max_rows]
    int max_cols = 5;  // uniform in [1, max_cols]
    std::string cell_alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
};

// Deterministic random table: unique header names, short alphanumeric cells,
// a caption on roughly half of all tables.
TableSpec generate_table(std::uint64_t seed, const TableLimits& limits);

// Whether template_id can produce a uniquely answerable question for this
// table (e.g. the entry-based template needs a cell value that is unique
// within its column).
bool template_applicable(const TableSpec& table, int template_id);

// Fills the template's placeholders with randomly chosen coordinates/names
// drawn from the table. Requires template_applicable.
QAPair instantiate_qa(const TableSpec& table, int template_id, std::uint64_t seed);

// Recomputes the answer from the table and the structured query alone. This
// is the checking path: it shares no state with instantiate_qa beyond the
// two inputs.
std::string oracle_answer(const TableSpec& table, const TableQuery& query);

// "first" .. "ninth"; throws a data error outside [1, 9].
std::string ordinal_name(int i);

}  // namespace pixeldoc
