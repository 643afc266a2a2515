#pragma once

// High-level command drivers behind the pixeldoc CLI. Each run_* function
// implements one subcommand end to end and is callable in-process, which is
// how the test suites exercise the full pipeline without spawning processes.
// Output directories are created on demand; every failure throws Error.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "pixeldoc/patchify.hpp"
#include "pixeldoc/raster.hpp"
#include "pixeldoc/rng.hpp"

namespace pixeldoc {

// --- gen-tableqa -----------------------------------------------------------

struct GenTableqaOptions {
    std::size_t n = 100;
    std::uint64_t seed = 0;
    std::string out_dir;  // required
    int max_rows = 6;     // table size caps forwarded to the generator
    int max_cols = 5;
};

// Writes out_dir/images/sample_%06zu.ppm plus one JSON line per sample to
// out_dir/tableqa.jsonl (question, answer, table, style, relative image
// path). Returns the JSONL path.
std::string run_gen_tableqa(const GenTableqaOptions& opts);

// --- render ----------------------------------------------------------------

struct RenderOptions {
    std::string text_file;   // plain text; mutually exclusive with table_file
    std::string table_file;  // JSON table spec {caption?, header, rows}
    std::string style;       // preset id, or a decimal index into the presets
    std::uint64_t seed = 0;
    int max_width = 896;  // wrap width for text documents
    std::string out_dir;  // required
};

// Renders the input to out_dir/render.ppm and writes out_dir/words.json
// (word boxes plus full text). Returns the PPM path.
std::string run_render(const RenderOptions& opts);

// --- patchify ----------------------------------------------------------------

struct PatchifyOptions {
    std::string image_path;         // PPM P6
    std::string mode = "variable";  // fixed224 | fixed896 | variable
    int budget = kMaxPatches;       // variable mode's patch ceiling
    std::string out_dir;            // optional; when set, writes patches.bin
};

struct PatchifyOutcome {
    PatchGrid grid;
    int n_patches = 0;
};

// Resizes the image for the chosen mode, cuts it into 14x14 patches, prints
// "grid {rows}x{cols} patches {n}" to `out`, and optionally dumps the patch
// matrix (u32 rows, u32 cols, then row-major little-endian f64) to
// out_dir/patches.bin.
PatchifyOutcome run_patchify(const PatchifyOptions& opts, std::ostream& out);

// --- make-targets ------------------------------------------------------------

struct MakeTargetsOptions {
    std::string task;    // mae | mdtg | rqa | bb
    std::string in_dir;  // a gen-tableqa output directory
    std::string out_dir;
    std::uint64_t seed = 0;
};

// Re-renders every dataset sample from its stored table + style, builds one
// training example per sample for the chosen task, and writes
// out_dir/targets.jsonl plus the derived (masked / bannered / rescaled)
// example images under out_dir/images/. Returns the JSONL path.
std::string run_make_targets(const MakeTargetsOptions& opts);

// --- pretrain ----------------------------------------------------------------

struct PretrainOptions {
    double scale = 0.001;           // curriculum scale in (0, 1]
    long long steps_override = -1;  // < 0: run the full scaled schedule
    std::string config_file;        // model config JSON; empty = defaults
    std::string out_dir;            // required
    std::uint64_t seed = 0;
    double lr = 1e-4;  // optimizer overrides (defaults match Hyperparameters)
    long long warmup_steps = 10000;
};

struct PretrainOutcome {
    long long steps = 0;
    double first_total = 0.0;
    double last_total = 0.0;
    std::string checkpoint_path;
    std::string loss_log_path;
};

// Runs the scaled curriculum on synthetic data generated on the fly (one
// task per step; resolution and batch size follow the stage), optimizing
// with AdamW. Writes out_dir/loss_log.csv (header
// `step,stage,task,total,mae,ocr,mlm,qa,bb`, roles absent from the step's
// batch left blank, flushed per step), out_dir/schedule.json, and
// out_dir/checkpoint.bin. Steps past the schedule's end reuse its final
// stage.
PretrainOutcome run_pretrain(const PretrainOptions& opts);

// --- eval --------------------------------------------------------------------

struct EvalOptions {
    std::string checkpoint_path;
    std::string dataset_path;  // gen-tableqa JSONL
    std::string metrics = "anls,em,f1";
    int resolution = 224;   // square resolution fed to the encoder
    int max_len = 32;       // generation budget per answer
    std::size_t limit = 0;  // 0 = score every record
};

// Greedy-decodes an answer for every dataset record and scores it against
// the stored gold answer. Returns the JSON report {metric: {mean, n}}.
std::string run_eval(const EvalOptions& opts);

// --- selftest ----------------------------------------------------------------

// Compact cross-module invariant sweep (RNG stream, tokenizer round trip,
// grid snapping, mask ratio, PPM round trip, metric worked examples, a
// finite-difference gradient probe, checkpoint round trip, curriculum
// boundaries, QA oracle agreement). Prints one "ok <name>" line per check to
// `out`; throws a data error naming the first failed check.
void run_selftest(std::ostream& out);

// --- shared helpers (exposed for tests) ---------------------------------------

// Bilinear image resize with word boxes rescaled to the new frame (rounded,
// clamped to stay non-empty and inside); text and style unchanged.
RenderedDocument scale_document(const RenderedDocument& doc, int target_w, int target_h);

// Deterministic miniature prose: 3-6 sentences "The {attribute} of the
// {subject} is {value}." over distinct attribute/subject pairs, plus one
// "What is the {attribute} of the {subject}?" question about them.
struct Passage {
    std::string text;
    std::string question;
    std::string answer;
};
Passage synth_passage(Rng& rng);

}  // namespace pixeldoc
