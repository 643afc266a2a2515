#include "pixeldoc/drivers.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pixeldoc/common.hpp"
#include "pixeldoc/curriculum.hpp"
#include "pixeldoc/dataset.hpp"
#include "pixeldoc/image.hpp"
#include "pixeldoc/metrics.hpp"
#include "pixeldoc/model.hpp"
#include "pixeldoc/tables.hpp"
#include "pixeldoc/targets.hpp"
#include "pixeldoc/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pixeldoc {

namespace {

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw_data("cannot create directory: " + path);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_data("cannot write file: " + path);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_data("cannot read file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw_data("cannot read file: " + path);
    return text;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

json parse_json(const std::string& text, const char* what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw_data(std::string("invalid JSON in ") + what);
    return j;
}

const json& field(const json& rec, const char* key) {
    const auto it = rec.find(key);
    if (it == rec.end()) throw_data(std::string("record missing field: ") + key);
    return *it;
}

std::string get_str(const json& rec, const char* key) {
    const json& v = field(rec, key);
    if (!v.is_string()) throw_data(std::string("record field must be a string: ") + key);
    return v.get<std::string>();
}

std::uint64_t get_u64(const json& rec, const char* key) {
    const json& v = field(rec, key);
    if (!v.is_number_integer() && !v.is_number_unsigned())
        throw_data(std::string("record field must be an integer: ") + key);
    return v.get<std::uint64_t>();
}

StylePreset resolve_style(const std::string& spec) {
    if (spec.empty()) return style_presets()[0];
    const bool digits =
        spec.size() <= 3 && std::all_of(spec.begin(), spec.end(), [](unsigned char c) {
            return std::isdigit(c) != 0;
        });
    if (digits) {
        const std::size_t k = std::stoul(spec);
        if (k >= style_presets().size()) throw_data("style index out of range: " + spec);
        return style_presets()[k];
    }
    return style_preset(spec);
}

StylePreset style_from_json(const json& j) {
    StylePreset preset = style_preset(get_str(j, "id"));
    preset.font_scale = static_cast<int>(get_u64(j, "font_scale"));
    return preset;
}

TableSpec table_from_json(const json& j) {
    if (!j.is_object()) throw_data("table spec must be a JSON object");
    TableSpec table;
    if (j.contains("caption") && !j["caption"].is_null()) {
        if (!j["caption"].is_string()) throw_data("table caption must be a string");
        table.caption = j["caption"].get<std::string>();
    }
    const json& header = field(j, "header");
    const json& rows = field(j, "rows");
    if (!header.is_array() || !rows.is_array())
        throw_data("table header and rows must be arrays");
    for (const json& cell : header) {
        if (!cell.is_string()) throw_data("table header cells must be strings");
        table.header.push_back(cell.get<std::string>());
    }
    for (const json& row : rows) {
        if (!row.is_array()) throw_data("table rows must be arrays of strings");
        std::vector<std::string> cells;
        for (const json& cell : row) {
            if (!cell.is_string()) throw_data("table cells must be strings");
            cells.push_back(cell.get<std::string>());
        }
        table.rows.push_back(std::move(cells));
    }
    table.validate();
    return table;
}

json roles_rle(const std::vector<LossRole>& roles) {
    json arr = json::array();
    std::size_t i = 0;
    while (i < roles.size()) {
        std::size_t j = i;
        while (j < roles.size() && roles[j] == roles[i]) ++j;
        arr.push_back(json::array({loss_role_name(roles[i]), j - i}));
        i = j;
    }
    return arr;
}

std::string image_rel_path(const char* stem, std::size_t index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "images/%s_%06zu.ppm", stem, index);
    return buf;
}

// --- synthetic pretraining examples ---

// Per-(step, example) seed, with the task id folded in so that two tasks
// sampled at the same step never share a data stream.
std::uint64_t example_seed(std::uint64_t seed, long long step, CurriculumTask task,
                           long long i) {
    const auto lane = (static_cast<std::uint64_t>(task) + 1) << 32 |
                      static_cast<std::uint32_t>(i);
    return mix_seed(seed, static_cast<std::uint64_t>(step), lane);
}

constexpr int kPassageWrapWidth = 512;

RenderedDocument passage_doc(const Passage& passage, const StylePreset& style) {
    return render_text_document(passage.text, style, kPassageWrapWidth);
}

RenderedDocument seeded_table_doc(std::uint64_t seed, const StylePreset& style,
                                  TableSpec* table_out = nullptr) {
    TableSpec table = generate_table(seed, TableLimits{});
    RenderedDocument doc = render_table_image(table, style);
    if (table_out) *table_out = std::move(table);
    return doc;
}

void resize_example_image(TrainingExample& ex, int resolution) {
    ex.image = resize_bilinear(ex.image, resolution, resolution);
}

TrainingExample make_pretrain_example(CurriculumTask task, std::uint64_t seed, long long step,
                                      long long i, int resolution) {
    const std::uint64_t es = example_seed(seed, step, task, i);
    Rng rng(mix_seed(es, 0));
    const StylePreset style = random_render_style(mix_seed(es, 1));

    switch (task) {
        case CurriculumTask::MAE: {
            RenderedDocument doc;
            if (rng.bounded(2) == 0) {
                doc = seeded_table_doc(mix_seed(es, 2), style);
            } else {
                Rng prng(mix_seed(es, 2));
                doc = passage_doc(synth_passage(prng), style);
            }
            const PatchGrid grid = fixed_grid(resolution);
            const PixelImage img =
                resize_bilinear(doc.image, grid.target_width(), grid.target_height());
            return build_mae_example(img, grid, kPatchMaskRatio, mix_seed(es, 3));
        }
        case CurriculumTask::MDTG: {
            Rng prng(mix_seed(es, 2));
            const RenderedDocument doc = passage_doc(synth_passage(prng), style);
            const auto spans = sample_phrase_spans(doc, kPhraseMaskRatio, mix_seed(es, 3));
            TrainingExample ex = build_mdtg_example(doc, spans);
            resize_example_image(ex, resolution);
            return ex;
        }
        case CurriculumTask::RQA: {
            Rng prng(mix_seed(es, 2));
            const Passage passage = synth_passage(prng);
            const RenderedDocument doc = passage_doc(passage, style);
            TrainingExample ex = build_rqa_example(doc, passage.question, passage.answer, style);
            resize_example_image(ex, resolution);
            return ex;
        }
        case CurriculumTask::TABLEQA: {
            TableSpec table;
            const RenderedDocument doc = seeded_table_doc(mix_seed(es, 2), style, &table);
            std::vector<int> applicable;
            for (int id = 1; id <= static_cast<int>(qa_templates().size()); ++id)
                if (template_applicable(table, id)) applicable.push_back(id);
            const QAPair qa =
                instantiate_qa(table, applicable[rng.index(applicable.size())], mix_seed(es, 3));
            TrainingExample ex = build_rqa_example(doc, qa.question, qa.answer, style);
            resize_example_image(ex, resolution);
            return ex;
        }
        case CurriculumTask::BB: {
            const RenderedDocument doc = seeded_table_doc(mix_seed(es, 2), style);
            const RenderedDocument scaled = scale_document(doc, resolution, resolution);
            const std::size_t word = rng.index(scaled.words.size());
            const BboxDirection dir = rng.bounded(2) == 0 ? BboxDirection::text_to_box
                                                          : BboxDirection::box_to_text;
            return serialize_bbox_example(scaled, word, dir);
        }
    }
    throw_data("unknown curriculum task");
}

struct RolePresence {
    bool mae = false;
    bool ocr = false;
    bool mlm = false;
    bool qa = false;
    bool bb = false;
};

RolePresence presence_of(const std::vector<TrainingExample>& batch) {
    RolePresence p;
    for (const TrainingExample& ex : batch) {
        if (ex.task_tag == TaskTag::MAE) p.mae = true;
        for (const LossRole role : ex.roles) {
            switch (role) {
                case LossRole::OCR: p.ocr = true; break;
                case LossRole::MLM: p.mlm = true; break;
                case LossRole::QA: p.qa = true; break;
                case LossRole::BB: p.bb = true; break;
                case LossRole::IGNORE: break;
            }
        }
    }
    return p;
}

}  // namespace

// --- gen-tableqa -------------------------------------------------------------

std::string run_gen_tableqa(const GenTableqaOptions& opts) {
    if (opts.out_dir.empty()) throw_usage("gen-tableqa requires an output directory");
    if (opts.max_rows < 1 || opts.max_cols < 1) throw_usage("table limits must be at least 1");
    ensure_dir(opts.out_dir + "/images");

    TableLimits limits;
    limits.max_rows = opts.max_rows;
    limits.max_cols = opts.max_cols;

    const std::string jsonl_path = opts.out_dir + "/tableqa.jsonl";
    std::ofstream out = open_out(jsonl_path);
    generate_dataset(opts.n, opts.seed, limits, [&](std::size_t i, DatasetSample& sample) {
        const std::string rel = image_rel_path("sample", i);
        write_ppm_file(sample.doc.image, opts.out_dir + "/" + rel);
        json j;
        j["index"] = i;
        j["seed"] = sample.sample_seed;
        j["image"] = rel;
        j["width"] = sample.doc.image.width;
        j["height"] = sample.doc.image.height;
        j["question"] = sample.qa.question;
        j["answer"] = sample.qa.answer;
        j["template_id"] = sample.qa.template_id;
        j["full_text"] = sample.doc.full_text;
        j["style"] = json{{"id", sample.doc.style.id}, {"font_scale", sample.doc.style.font_scale}};
        json table;
        table["caption"] =
            sample.qa.table.caption ? json(*sample.qa.table.caption) : json(nullptr);
        table["header"] = sample.qa.table.header;
        table["rows"] = sample.qa.table.rows;
        j["table"] = std::move(table);
        out << j.dump() << '\n';
    });
    out.flush();
    if (!out) throw_data("failed writing " + jsonl_path);
    return jsonl_path;
}

// --- render --------------------------------------------------------------------

std::string run_render(const RenderOptions& opts) {
    const bool has_text = !opts.text_file.empty();
    const bool has_table = !opts.table_file.empty();
    if (has_text == has_table) throw_usage("render needs exactly one of --text and --table");
    if (opts.out_dir.empty()) throw_usage("render requires an output directory");
    if (opts.max_width < 1) throw_usage("max width must be positive");

    const StylePreset style = resolve_style(opts.style);
    RenderedDocument doc;
    if (has_text) {
        doc = render_text_document(read_file(opts.text_file), style, opts.max_width, opts.seed);
    } else {
        const json spec = parse_json(read_file(opts.table_file), "table spec");
        doc = render_table_image(table_from_json(spec), style, opts.seed);
    }

    ensure_dir(opts.out_dir);
    const std::string ppm_path = opts.out_dir + "/render.ppm";
    write_ppm_file(doc.image, ppm_path);

    json words = json::array();
    for (const WordBox& w : doc.words)
        words.push_back(json{{"text", w.text}, {"x", w.x}, {"y", w.y}, {"w", w.w}, {"h", w.h}});
    json meta;
    meta["width"] = doc.image.width;
    meta["height"] = doc.image.height;
    meta["style"] = style.id;
    meta["full_text"] = doc.full_text;
    meta["words"] = std::move(words);
    open_out(opts.out_dir + "/words.json") << meta.dump(2) << '\n';
    return ppm_path;
}

// --- patchify --------------------------------------------------------------------

PatchifyOutcome run_patchify(const PatchifyOptions& opts, std::ostream& out) {
    if (opts.image_path.empty()) throw_usage("patchify requires an image path");
    const PixelImage img = read_ppm_file(opts.image_path);

    PatchGrid grid;
    if (opts.mode == "fixed224") {
        grid = fixed_grid(224);
    } else if (opts.mode == "fixed896") {
        grid = fixed_grid(896);
    } else if (opts.mode == "variable") {
        grid = choose_grid(img.width, img.height, opts.budget);
    } else {
        throw_usage("unknown patchify mode: " + opts.mode + " (expected fixed224|fixed896|variable)");
    }

    const PixelImage resized = resize_bilinear(img, grid.target_width(), grid.target_height());
    const PatchSequence seq = patchify(resized, grid);
    out << "grid " << grid.rows << "x" << grid.cols << " patches " << grid.n_patches() << "\n";

    if (!opts.out_dir.empty()) {
        ensure_dir(opts.out_dir);
        std::string blob;
        blob.reserve(8 + seq.patches.size() * (14 * 14 * 3) * 8);
        put_u32(blob, static_cast<std::uint32_t>(grid.rows));
        put_u32(blob, static_cast<std::uint32_t>(grid.cols));
        for (const auto& patch : seq.patches)
            for (const double v : patch) put_f64(blob, v);
        std::ofstream f = open_out(opts.out_dir + "/patches.bin");
        f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        f.flush();
        if (!f) throw_data("failed writing " + opts.out_dir + "/patches.bin");
    }
    return {grid, grid.n_patches()};
}

// --- make-targets -------------------------------------------------------------------

std::string run_make_targets(const MakeTargetsOptions& opts) {
    if (opts.in_dir.empty() || opts.out_dir.empty())
        throw_usage("make-targets requires input and output directories");
    TaskTag want;
    if (opts.task == "mae") {
        want = TaskTag::MAE;
    } else if (opts.task == "mdtg") {
        want = TaskTag::MDTG;
    } else if (opts.task == "rqa") {
        want = TaskTag::RQA;
    } else if (opts.task == "bb") {
        want = TaskTag::BB;
    } else {
        throw_usage("unknown task: " + opts.task + " (expected mae|mdtg|rqa|bb)");
    }

    const std::string in_path = opts.in_dir + "/tableqa.jsonl";
    std::ifstream in(in_path, std::ios::binary);
    if (!in) throw_data("cannot read file: " + in_path);
    ensure_dir(opts.out_dir + "/images");
    const std::string out_path = opts.out_dir + "/targets.jsonl";
    std::ofstream out = open_out(out_path);

    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json rec = parse_json(line, "dataset record");
        const TableSpec table = table_from_json(field(rec, "table"));
        const StylePreset style = style_from_json(field(rec, "style"));
        const RenderedDocument doc = render_table_image(table, style, get_u64(rec, "seed"));
        const std::uint64_t es = mix_seed(opts.seed, n, static_cast<std::uint64_t>(want) + 1);

        TrainingExample ex;
        PatchGrid grid;
        switch (want) {
            case TaskTag::MAE: {
                grid = choose_grid(doc.image.width, doc.image.height);
                const PixelImage img =
                    resize_bilinear(doc.image, grid.target_width(), grid.target_height());
                ex = build_mae_example(img, grid, kPatchMaskRatio, mix_seed(es, 1));
                break;
            }
            case TaskTag::MDTG: {
                const auto spans = sample_phrase_spans(doc, kPhraseMaskRatio, mix_seed(es, 1));
                ex = build_mdtg_example(doc, spans);
                grid = choose_grid(ex.image.width, ex.image.height);
                ex.image = resize_bilinear(ex.image, grid.target_width(), grid.target_height());
                break;
            }
            case TaskTag::RQA: {
                ex = build_rqa_example(doc, get_str(rec, "question"), get_str(rec, "answer"),
                                       style);
                grid = choose_grid(ex.image.width, ex.image.height);
                ex.image = resize_bilinear(ex.image, grid.target_width(), grid.target_height());
                break;
            }
            case TaskTag::BB: {
                grid = choose_grid(doc.image.width, doc.image.height);
                const RenderedDocument scaled =
                    scale_document(doc, grid.target_width(), grid.target_height());
                Rng rng(mix_seed(es, 1));
                const std::size_t word = rng.index(scaled.words.size());
                const BboxDirection dir = rng.bounded(2) == 0 ? BboxDirection::text_to_box
                                                              : BboxDirection::box_to_text;
                ex = serialize_bbox_example(scaled, word, dir);
                break;
            }
        }
        ex.validate();

        const std::string rel = image_rel_path("target", n);
        write_ppm_file(ex.image, opts.out_dir + "/" + rel);
        json j;
        j["index"] = n;
        j["task"] = task_tag_name(ex.task_tag);
        j["image"] = rel;
        j["grid"] = json::array({grid.rows, grid.cols});
        j["prefix"] = ex.prefix_tokens;
        j["target"] = ex.target_tokens;
        j["roles"] = roles_rle(ex.roles);
        if (want == TaskTag::MAE) j["mae_mask"] = ex.mae_mask;
        out << j.dump() << '\n';
        ++n;
    }
    if (n == 0) throw_data("dataset is empty: " + in_path);
    out.flush();
    if (!out) throw_data("failed writing " + out_path);
    return out_path;
}

// --- pretrain --------------------------------------------------------------------

PretrainOutcome run_pretrain(const PretrainOptions& opts) {
    if (opts.out_dir.empty()) throw_usage("pretrain requires an output directory");
    const CurriculumSchedule schedule = pretraining_schedule(opts.scale);

    ModelConfig cfg;
    if (opts.config_file.empty()) {
        cfg.seed = opts.seed;
    } else {
        cfg = ModelConfig::from_json(read_file(opts.config_file));
    }
    cfg.validate();

    Parameters params = init_params(cfg);
    AdamState adam = AdamState::zeros_for(params);
    Hyperparameters hyper;
    hyper.learning_rate = opts.lr;
    hyper.warmup_steps = static_cast<int>(opts.warmup_steps);
    hyper.validate();

    const long long total = schedule.total_steps();
    const long long steps = opts.steps_override >= 0 ? opts.steps_override : total;

    ensure_dir(opts.out_dir);
    open_out(opts.out_dir + "/schedule.json") << schedule.to_json() << '\n';

    PretrainOutcome outcome;
    outcome.steps = steps;
    outcome.loss_log_path = opts.out_dir + "/loss_log.csv";
    outcome.checkpoint_path = opts.out_dir + "/checkpoint.bin";

    std::ofstream log = open_out(outcome.loss_log_path);
    log << "step,stage,task,total,mae,ocr,mlm,qa,bb\n";
    log.flush();

    for (long long step = 0; step < steps; ++step) {
        const long long sched_step = std::min(step, total - 1);
        const StageSpec& stage = stage_at(schedule, sched_step);
        const CurriculumTask task = sample_task(schedule, sched_step, opts.seed);

        std::vector<TrainingExample> batch;
        batch.reserve(static_cast<std::size_t>(stage.batch_size));
        for (long long i = 0; i < stage.batch_size; ++i)
            batch.push_back(make_pretrain_example(task, opts.seed, step, i, stage.resolution));

        const ForwardBackwardResult fb = forward_backward(cfg, params, batch);
        adamw_step(params, fb.grads, adam, hyper, step + 1);

        const RolePresence present = presence_of(batch);
        std::string row = std::to_string(step);
        row += ',';
        row += std::to_string(stage.index);
        row += ',';
        row += curriculum_task_name(task);
        row += ',';
        row += fmt_double(fb.losses.total);
        row += ',';
        if (present.mae) row += fmt_double(fb.losses.mae);
        row += ',';
        if (present.ocr) row += fmt_double(fb.losses.ocr);
        row += ',';
        if (present.mlm) row += fmt_double(fb.losses.mlm);
        row += ',';
        if (present.qa) row += fmt_double(fb.losses.qa);
        row += ',';
        if (present.bb) row += fmt_double(fb.losses.bb);
        log << row << '\n';
        log.flush();
        if (!log) throw_data("failed writing " + outcome.loss_log_path);

        if (step == 0) outcome.first_total = fb.losses.total;
        outcome.last_total = fb.losses.total;
    }

    save_checkpoint(outcome.checkpoint_path, cfg, params);
    return outcome;
}

// --- eval --------------------------------------------------------------------------

std::string run_eval(const EvalOptions& opts) {
    if (opts.checkpoint_path.empty() || opts.dataset_path.empty())
        throw_usage("eval requires a checkpoint and a dataset");
    if (opts.max_len < 1) throw_usage("max generation length must be positive");
    const Checkpoint ck = load_checkpoint(opts.checkpoint_path);

    std::ifstream in(opts.dataset_path, std::ios::binary);
    if (!in) throw_data("cannot read file: " + opts.dataset_path);
    const fs::path base = fs::path(opts.dataset_path).parent_path();

    std::vector<std::string> metric_names;
    std::string name;
    for (const char c : opts.metrics + ",") {
        if (c == ',') {
            if (!name.empty()) metric_names.push_back(name);
            name.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            name += c;
        }
    }
    if (metric_names.empty()) throw_usage("eval requires at least one metric");

    std::vector<EvalRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json rec = parse_json(line, "dataset record");
        PixelImage img = read_ppm_file((base / get_str(rec, "image")).string());
        img = resize_bilinear(img, opts.resolution, opts.resolution);

        std::vector<TokenId> prefix{tok::kQa};
        for (const TokenId t : encode(get_str(rec, "question"))) prefix.push_back(t);
        const std::vector<TokenId> generated =
            generate_greedy(ck.config, ck.params, img, prefix, opts.max_len);
        std::vector<TokenId> bytes;
        for (const TokenId t : generated)
            if (t < tok::kByteCount) bytes.push_back(t);

        records.push_back({decode(bytes), {get_str(rec, "answer")}, {}});
        if (opts.limit != 0 && records.size() >= opts.limit) break;
    }
    if (records.empty()) throw_data("dataset is empty: " + opts.dataset_path);

    return report_json(evaluate_dataset(records, metric_names));
}

// --- selftest ------------------------------------------------------------------------

void run_selftest(std::ostream& out) {
    const auto check = [&out](const char* name, bool ok) {
        if (!ok) throw_data(std::string("selftest failed: ") + name);
        out << "ok " << name << "\n";
    };

    {
        Rng rng(0);
        check("rng-stream", rng.next_u64() == 0xe220a8397b1dcdafULL &&
                                rng.next_u64() == 0x6e789e6aa1b965f4ULL &&
                                rng.next_u64() == 0x06c45d188009454fULL);
    }
    {
        const std::string sample = "Table 7: caf\xC3\xA9 cells & 42";
        check("tokenizer-round-trip",
              decode(encode(sample)) == sample && tok::kVocabSize == 1288);
    }
    {
        const PatchGrid fixed = fixed_grid(896);
        bool ok = fixed.rows == 64 && fixed.cols == 64 && fixed.n_patches() == 4096;
        Rng rng(7);
        for (int k = 0; k < 50 && ok; ++k) {
            const int w = 14 + static_cast<int>(rng.index(3000));
            const int h = 14 + static_cast<int>(rng.index(3000));
            const PatchGrid g = choose_grid(w, h);
            const int lo = std::min(g.rows, g.cols);
            const int hi = std::max(g.rows, g.cols);
            const unsigned ratio = static_cast<unsigned>(hi / lo);
            ok = g.n_patches() <= kMaxPatches && hi % lo == 0 &&
                 std::has_single_bit(ratio) && std::countr_zero(ratio) % 2 == 0;
        }
        check("grid-snap", ok);
    }
    {
        bool ok = true;
        for (const int n : {100, 256, 4096}) {
            const auto mask = sample_patch_mask(n, 0.15, 123);
            ok = ok && static_cast<int>(mask.size()) == static_cast<int>(std::floor(0.15 * n));
            ok = ok && std::is_sorted(mask.begin(), mask.end()) &&
                 std::adjacent_find(mask.begin(), mask.end()) == mask.end();
        }
        check("mask-ratio", ok);
    }
    {
        Rng rng(11);
        PixelImage img(9, 7);
        for (Rgb& px : img.pixels)
            px = {static_cast<std::uint8_t>(rng.bounded(256)),
                  static_cast<std::uint8_t>(rng.bounded(256)),
                  static_cast<std::uint8_t>(rng.bounded(256))};
        check("ppm-round-trip", decode_ppm(encode_ppm(img)) == img);
    }
    check("metric-worked-examples",
          anls("match", {"match"}) == 1.0 &&
              std::abs(anls("pianos", {"piano"}) - (1.0 - 1.0 / 6.0)) < 1e-12 &&
              anls("blue", {"red"}) == 0.0 && exact_match("The Cat", {"cat"}) == 1.0 &&
              std::abs(token_f1("x b", {"x c"}) - 0.5) < 1e-12);
    {
        ModelConfig cfg;
        cfg.d_model = 16;
        cfg.n_heads = 2;
        cfg.n_encoder_layers = 1;
        cfg.n_decoder_layers = 1;
        cfg.n_mae_decoder_layers = 1;
        cfg.d_ff = 24;
        cfg.vocab_size = 264;
        cfg.max_patches = 16;
        cfg.max_text_len = 32;
        cfg.seed = 5;
        Parameters params = init_params(cfg);

        Rng rng(3);
        PixelImage img(56, 56);
        for (Rgb& px : img.pixels)
            px = {static_cast<std::uint8_t>(rng.bounded(256)),
                  static_cast<std::uint8_t>(rng.bounded(256)),
                  static_cast<std::uint8_t>(rng.bounded(256))};

        std::vector<TrainingExample> batch;
        batch.push_back(build_mae_example(img, PatchGrid{4, 4}, 0.15, 9));
        TrainingExample gen;
        gen.image = img;
        gen.task_tag = TaskTag::RQA;
        gen.prefix_tokens = {tok::kQa, 'q'};
        gen.target_tokens = {'a', tok::kEnd};
        gen.roles = {LossRole::QA, LossRole::QA};
        batch.push_back(gen);

        const ForwardBackwardResult fb = forward_backward(cfg, params, batch);
        bool ok = true;
        for (const char* tensor :
             {"patch_proj.weight", "lm_head.weight", "enc.0.attn.wq.weight", "pixel_head.bias"}) {
            Tensor& t = params.at(tensor);
            const std::size_t idx = t.data.size() / 2;
            const double orig = t.data[idx];
            const double h = 1e-4;
            t.data[idx] = orig + h;
            const double up = batch_loss(cfg, params, batch).total;
            t.data[idx] = orig - h;
            const double down = batch_loss(cfg, params, batch).total;
            t.data[idx] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = fb.grads.at(tensor).data[idx];
            const double rel = std::abs(numeric - analytic) /
                               std::max({1e-4, std::abs(numeric), std::abs(analytic)});
            ok = ok && rel < 1e-4;
        }
        check("gradient-probe", ok);

        const std::string path =
            (fs::temp_directory_path() / "pixeldoc_selftest_checkpoint.bin").string();
        save_checkpoint(path, cfg, params);
        const Checkpoint ck = load_checkpoint(path);
        bool same = ck.config == cfg && ck.params.tensors.size() == params.tensors.size();
        for (std::size_t i = 0; same && i < params.tensors.size(); ++i)
            same = ck.params.tensors[i].name == params.tensors[i].name &&
                   ck.params.tensors[i].shape == params.tensors[i].shape &&
                   ck.params.tensors[i].data == params.tensors[i].data;
        fs::remove(path);
        check("checkpoint-round-trip", same);
    }
    {
        const CurriculumSchedule schedule = pretraining_schedule(0.01);
        const auto b = schedule.boundaries();
        check("curriculum-boundaries",
              b[0] == 500 && b[1] == 4000 && b[2] == 4550 && b[3] == 6050);
    }
    {
        bool ok = true;
        const auto samples = generate_dataset_vec(100, 77, TableLimits{});
        for (const DatasetSample& s : samples)
            ok = ok && oracle_answer(s.qa.table, s.qa.provenance) == s.qa.answer;
        check("qa-oracle", ok);
    }
}

// --- shared helpers -------------------------------------------------------------------

RenderedDocument scale_document(const RenderedDocument& doc, int target_w, int target_h) {
    if (target_w < 1 || target_h < 1) throw_data("target size must be positive");
    if (doc.image.width < 1 || doc.image.height < 1) throw_data("document image is empty");
    RenderedDocument out = doc;
    out.image = resize_bilinear(doc.image, target_w, target_h);
    const double sx = static_cast<double>(target_w) / doc.image.width;
    const double sy = static_cast<double>(target_h) / doc.image.height;
    for (WordBox& w : out.words) {
        const int x2 = static_cast<int>(std::llround((w.x + w.w) * sx));
        const int y2 = static_cast<int>(std::llround((w.y + w.h) * sy));
        w.x = std::clamp(static_cast<int>(std::llround(w.x * sx)), 0, target_w - 1);
        w.y = std::clamp(static_cast<int>(std::llround(w.y * sy)), 0, target_h - 1);
        w.w = std::clamp(x2 - w.x, 1, target_w - w.x);
        w.h = std::clamp(y2 - w.y, 1, target_h - w.y);
    }
    return out;
}

Passage synth_passage(Rng& rng) {
    static const std::array<const char*, 10> kSubjects = {
        "engine", "bridge", "garden", "library", "reactor",
        "harbor", "orchard", "tunnel", "vault", "mill"};
    static const std::array<const char*, 10> kAttributes = {
        "color", "mass", "length", "height", "owner",
        "age", "code", "price", "rating", "label"};
    static const std::array<const char*, 12> kValues = {
        "red", "blue", "green", "amber", "violet", "gray",
        "teal", "gold", "ochre", "seven", "nine", "42"};

    const int n_sentences = 3 + static_cast<int>(rng.index(4));
    std::vector<int> pairs(kSubjects.size() * kAttributes.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = static_cast<int>(i);
    rng.shuffle(pairs);

    Passage passage;
    std::vector<std::string> answers(n_sentences);
    std::vector<std::pair<std::string, std::string>> topics(n_sentences);
    for (int i = 0; i < n_sentences; ++i) {
        const std::string attribute = kAttributes[pairs[i] / kSubjects.size()];
        const std::string subject = kSubjects[pairs[i] % kSubjects.size()];
        const std::string value = kValues[rng.index(kValues.size())];
        if (i > 0) passage.text += ' ';
        passage.text += "The " + attribute + " of the " + subject + " is " + value + ".";
        topics[i] = {attribute, subject};
        answers[i] = value;
    }
    const int pick = static_cast<int>(rng.index(n_sentences));
    passage.question = "What is the " + topics[pick].first + " of the " + topics[pick].second + "?";
    passage.answer = answers[pick];
    return passage;
}

}  // namespace pixeldoc
