#include "pixeldoc/tables.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "pixeldoc/rng.hpp"

namespace pixeldoc {

namespace {

// One bucket per column: how often each cell value occurs in that column
// (data rows only).
std::vector<std::unordered_map<std::string, int>> column_value_counts(const TableSpec& t) {
    std::vector<std::unordered_map<std::string, int>> counts(t.n_cols());
    for (const auto& row : t.rows)
        for (int c = 0; c < t.n_cols(); ++c) ++counts[c][row[c]];
    return counts;
}

std::string replace_once(std::string s, std::string_view key, std::string_view value) {
    auto pos = s.find(key);
    if (pos == std::string::npos)
        throw_data("question template is missing placeholder '" + std::string(key) + "'");
    s.replace(pos, key.size(), value);
    return s;
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

std::string letter_token(Rng& rng, int min_len, int max_len, bool capitalize) {
    static constexpr char kLetters[] = "abcdefghijklmnopqrstuvwxyz";
    int len = min_len + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(max_len - min_len + 1)));
    std::string out;
    out.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) out.push_back(kLetters[rng.index(26)]);
    if (capitalize) out[0] = static_cast<char>(out[0] - 'a' + 'A');
    return out;
}

std::string cell_token(Rng& rng, const std::string& alphabet) {
    int len = 1 + static_cast<int>(rng.bounded(4));
    std::string out;
    out.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) out.push_back(alphabet[rng.index(alphabet.size())]);
    return out;
}

}  // namespace

void TableSpec::validate() const {
    if (header.empty()) throw_data("table has no columns");
    if (rows.empty()) throw_data("table has no data rows");
    std::unordered_set<std::string> seen;
    for (const auto& name : header) {
        if (name.empty()) throw_data("empty header name");
        if (!seen.insert(name).second) throw_data("duplicate header name '" + name + "'");
    }
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != n_cols()) throw_data("table is not rectangular");
        for (const auto& cell : row)
            if (cell.empty()) throw_data("empty table cell");
    }
    if (caption && caption->empty()) throw_data("empty table caption");
}

const std::array<QATemplate, 11>& qa_templates() {
    static const std::array<QATemplate, 11> kTemplates = {{
        {1, "What is the cell value in row [row_number] and column [column_number]?",
         AnswerKind::cell_lookup},
        {2, "What is the cell value in column [column_number] and row [row_number]?",
         AnswerKind::cell_lookup},
        {3, "What does the cell in the row [row_number] and column [column_number] contain?",
         AnswerKind::cell_lookup},
        {4, "What does the cell in column [column_number] and row [row_number] contain?",
         AnswerKind::cell_lookup},
        {5, "What is the cell value in column [column_name] and row [row_number]?",
         AnswerKind::cell_lookup},
        {6, "What is the value of cell where column is [column_name] and row number is [row_number]?",
         AnswerKind::cell_lookup},
        {7, "What is the value in the cell in [column ordinal] column where the row contains [row entry]?",
         AnswerKind::cell_lookup},
        {8, "What is the value for [column 1st entries]?", AnswerKind::cell_lookup},
        {9, "How many rows are there in this table?", AnswerKind::row_count},
        {10, "How many columns are there in this table?", AnswerKind::col_count},
        {11, "What is the caption of the table?", AnswerKind::caption},
    }};
    return kTemplates;
}

std::string ordinal_name(int i) {
    static const char* kNames[] = {"first", "second", "third",   "fourth", "fifth",
                                   "sixth", "seventh", "eighth", "ninth"};
    if (i < 1 || i > 9) throw_data("no ordinal word for column " + std::to_string(i));
    return kNames[i - 1];
}

TableSpec generate_table(std::uint64_t seed, const TableLimits& limits) {
    if (limits.max_rows < 1 || limits.max_cols < 1) throw_data("table limits must be at least 1");
    if (limits.cell_alphabet.empty()) throw_data("cell alphabet must be non-empty");
    Rng rng(seed);
    TableSpec t;
    int n_rows = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(limits.max_rows)));
    int n_cols = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(limits.max_cols)));

    t.header.reserve(static_cast<std::size_t>(n_cols));
    for (int c = 0; c < n_cols; ++c) {
        std::string name;
        for (int attempt = 0; attempt < 16; ++attempt) {
            name = letter_token(rng, 3, 7, /*capitalize=*/true);
            if (std::find(t.header.begin(), t.header.end(), name) == t.header.end()) break;
            name.clear();
        }
        if (name.empty()) name = letter_token(rng, 3, 7, true) + std::to_string(c + 1);
        t.header.push_back(std::move(name));
    }

    t.rows.assign(static_cast<std::size_t>(n_rows), {});
    for (auto& row : t.rows) {
        row.reserve(static_cast<std::size_t>(n_cols));
        for (int c = 0; c < n_cols; ++c) row.push_back(cell_token(rng, limits.cell_alphabet));
    }

    if (rng.chance(0.5)) {
        static const char* kHeads[] = {"Summary",   "Report",  "Overview", "Inventory",
                                       "Results",   "Prices",  "Survey",   "Totals"};
        t.caption = std::string(kHeads[rng.index(8)]) + " of " + letter_token(rng, 3, 6, false);
    }
    t.validate();
    return t;
}

bool template_applicable(const TableSpec& table, int template_id) {
    switch (template_id) {
        case 1:
        case 2:
        case 3:
        case 4:
        case 5:
        case 6:
        case 9:
        case 10:
            return true;
        case 7: {
            auto counts = column_value_counts(table);
            for (const auto& row : table.rows)
                for (int c = 0; c < table.n_cols(); ++c)
                    if (counts[c].at(row[c]) == 1) return true;
            return false;
        }
        case 8: {
            if (table.n_cols() < 2) return false;
            auto counts = column_value_counts(table);
            for (const auto& row : table.rows)
                if (counts[0].at(row[0]) == 1) return true;
            return false;
        }
        case 11:
            return table.caption.has_value();
        default:
            throw_data("unknown question template " + std::to_string(template_id));
    }
}

QAPair instantiate_qa(const TableSpec& table, int template_id, std::uint64_t seed) {
    table.validate();
    if (template_id < 1 || template_id > 11)
        throw_data("unknown question template " + std::to_string(template_id));
    if (!template_applicable(table, template_id)) {
        std::string reason;
        if (template_id == 7) {
            reason = "no cell value is unique within its column";
        } else if (template_id == 8) {
            reason = table.n_cols() < 2 ? "table has fewer than two columns"
                                        : "no column-1 value is unique";
        } else if (template_id == 11) {
            reason = "table has no caption";
        }
        throw_data("question template " + std::to_string(template_id) +
                   " is not applicable: " + reason);
    }

    Rng rng(seed);
    const QATemplate& tpl = qa_templates()[static_cast<std::size_t>(template_id - 1)];
    QAPair qa;
    qa.table = table;
    qa.template_id = template_id;
    std::string q = tpl.pattern;

    auto draw_row = [&] { return 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(table.n_rows()))); };
    auto draw_col = [&] { return 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(table.n_cols()))); };

    switch (template_id) {
        case 1:
        case 3: {  // row placeholder appears first
            int row = draw_row();
            int col = draw_col();
            q = replace_once(q, "[row_number]", std::to_string(row));
            q = replace_once(q, "[column_number]", std::to_string(col));
            qa.provenance = {TableQuery::Kind::cell_by_row_col, row, col, {}, {}, 0, {}};
            qa.answer = table.rows[static_cast<std::size_t>(row - 1)][static_cast<std::size_t>(col - 1)];
            break;
        }
        case 2:
        case 4: {  // column placeholder appears first
            int col = draw_col();
            int row = draw_row();
            q = replace_once(q, "[column_number]", std::to_string(col));
            q = replace_once(q, "[row_number]", std::to_string(row));
            qa.provenance = {TableQuery::Kind::cell_by_row_col, row, col, {}, {}, 0, {}};
            qa.answer = table.rows[static_cast<std::size_t>(row - 1)][static_cast<std::size_t>(col - 1)];
            break;
        }
        case 5:
        case 6: {
            int col = draw_col();
            int row = draw_row();
            const std::string& name = table.header[static_cast<std::size_t>(col - 1)];
            q = replace_once(q, "[column_name]", quoted(name));
            q = replace_once(q, "[row_number]", std::to_string(row));
            qa.provenance = {TableQuery::Kind::cell_by_col_name, row, 0, name, {}, 0, {}};
            qa.answer = table.rows[static_cast<std::size_t>(row - 1)][static_cast<std::size_t>(col - 1)];
            break;
        }
        case 7: {
            int target_col = 1 + static_cast<int>(rng.bounded(
                                     static_cast<std::uint64_t>(std::min(9, table.n_cols()))));
            auto counts = column_value_counts(table);
            // (row, col) pairs whose value pins down a unique row.
            std::vector<std::pair<int, int>> candidates;
            for (int r = 0; r < table.n_rows(); ++r)
                for (int c = 0; c < table.n_cols(); ++c)
                    if (counts[c].at(table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]) == 1)
                        candidates.emplace_back(r, c);
            auto [r, c] = candidates[rng.index(candidates.size())];
            const std::string& entry = table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            q = replace_once(q, "[column ordinal]", ordinal_name(target_col));
            q = replace_once(q, "[row entry]", quoted(entry));
            qa.provenance = {TableQuery::Kind::cell_by_ordinal_entry, 0, target_col, {}, entry, c + 1, {}};
            qa.answer = table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(target_col - 1)];
            break;
        }
        case 8: {
            auto counts = column_value_counts(table);
            std::vector<int> candidates;
            for (int r = 0; r < table.n_rows(); ++r)
                if (counts[0].at(table.rows[static_cast<std::size_t>(r)][0]) == 1)
                    candidates.push_back(r);
            int r = candidates[rng.index(candidates.size())];
            const std::string& key = table.rows[static_cast<std::size_t>(r)][0];
            q = replace_once(q, "[column 1st entries]", quoted(key));
            qa.provenance = {TableQuery::Kind::cell_by_key, 0, 0, {}, {}, 0, key};
            qa.answer = table.rows[static_cast<std::size_t>(r)][1];
            break;
        }
        case 9:
            qa.provenance.kind = TableQuery::Kind::row_count;
            qa.answer = std::to_string(table.n_rows());
            break;
        case 10:
            qa.provenance.kind = TableQuery::Kind::col_count;
            qa.answer = std::to_string(table.n_cols());
            break;
        case 11:
            qa.provenance.kind = TableQuery::Kind::caption;
            qa.answer = *table.caption;
            break;
    }
    qa.question = std::move(q);
    return qa;
}

std::string oracle_answer(const TableSpec& table, const TableQuery& query) {
    table.validate();
    auto cell = [&](int row, int col) -> const std::string& {
        if (row < 1 || row > table.n_rows()) throw_data("query row out of range");
        if (col < 1 || col > table.n_cols()) throw_data("query column out of range");
        return table.rows[static_cast<std::size_t>(row - 1)][static_cast<std::size_t>(col - 1)];
    };

    switch (query.kind) {
        case TableQuery::Kind::cell_by_row_col:
            return cell(query.row, query.col);
        case TableQuery::Kind::cell_by_col_name: {
            int found = -1;
            for (int c = 0; c < table.n_cols(); ++c) {
                if (table.header[static_cast<std::size_t>(c)] == query.column_name) {
                    if (found >= 0) throw_data("ambiguous column name '" + query.column_name + "'");
                    found = c;
                }
            }
            if (found < 0) throw_data("unknown column name '" + query.column_name + "'");
            return cell(query.row, found + 1);
        }
        case TableQuery::Kind::cell_by_ordinal_entry: {
            if (query.entry_col < 1 || query.entry_col > table.n_cols())
                throw_data("query column out of range");
            int found = -1;
            for (int r = 0; r < table.n_rows(); ++r) {
                if (table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(query.entry_col - 1)] ==
                    query.entry) {
                    if (found >= 0) throw_data("entry '" + query.entry + "' is not unique in its column");
                    found = r;
                }
            }
            if (found < 0) throw_data("entry '" + query.entry + "' not found");
            return cell(found + 1, query.col);
        }
        case TableQuery::Kind::cell_by_key: {
            if (table.n_cols() < 2) throw_data("key lookup needs at least two columns");
            int found = -1;
            for (int r = 0; r < table.n_rows(); ++r) {
                if (table.rows[static_cast<std::size_t>(r)][0] == query.key) {
                    if (found >= 0) throw_data("key '" + query.key + "' is not unique in column 1");
                    found = r;
                }
            }
            if (found < 0) throw_data("key '" + query.key + "' not found");
            return cell(found + 1, 2);
        }
        case TableQuery::Kind::row_count:
            return std::to_string(table.n_rows());
        case TableQuery::Kind::col_count:
            return std::to_string(table.n_cols());
        case TableQuery::Kind::caption:
            if (!table.caption) throw_data("table has no caption");
            return *table.caption;
    }
    throw_data("unknown query kind");
}

}  // namespace pixeldoc
