#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pixeldoc/common.hpp"
#include "pixeldoc/drivers.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

int exit_code_for(pixeldoc::ErrorKind kind) {
    switch (kind) {
        case pixeldoc::ErrorKind::usage: return 2;
        case pixeldoc::ErrorKind::data: return 3;
        case pixeldoc::ErrorKind::numeric: return 4;
    }
    return 3;
}

// PIXELDOC_THREADS caps the worker-thread count; the default is the
// machine's parallelism. Results are bitwise identical either way.
void apply_thread_cap() {
#ifdef _OPENMP
    if (const char* env = std::getenv("PIXELDOC_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_cap();

    CLI::App app{"Synthetic document rendering, patchification, and toy pixel-to-text pretraining"};
    app.require_subcommand(1);

    pixeldoc::GenTableqaOptions gen_opts;
    CLI::App* gen = app.add_subcommand(
        "gen-tableqa", "Generate a deterministic table-QA dataset (JSONL + PPM images)");
    gen->add_option("--n", gen_opts.n, "number of samples")->capture_default_str();
    gen->add_option("--seed", gen_opts.seed, "RNG seed")->capture_default_str();
    gen->add_option("--out", gen_opts.out_dir, "output directory")->required();
    gen->add_option("--max-rows", gen_opts.max_rows, "max data rows per table")
        ->capture_default_str();
    gen->add_option("--max-cols", gen_opts.max_cols, "max columns per table")
        ->capture_default_str();

    pixeldoc::RenderOptions render_opts;
    CLI::App* render =
        app.add_subcommand("render", "Rasterize a text file or a JSON table spec to PPM");
    render->add_option("--text", render_opts.text_file, "plain-text input file");
    render->add_option("--table", render_opts.table_file,
                       "JSON table spec file {caption?, header, rows}");
    render->add_option("--style", render_opts.style, "style preset id or index (default: first)");
    render->add_option("--seed", render_opts.seed, "document seed")->capture_default_str();
    render->add_option("--max-width", render_opts.max_width, "wrap width for text documents, px")
        ->capture_default_str();
    render->add_option("--out", render_opts.out_dir, "output directory")->required();

    pixeldoc::PatchifyOptions patchify_opts;
    CLI::App* patchify =
        app.add_subcommand("patchify", "Cut an image into 14x14 patches and report the grid");
    patchify->add_option("--image", patchify_opts.image_path, "input PPM (P6)")->required();
    patchify->add_option("--mode", patchify_opts.mode, "fixed224 | fixed896 | variable")
        ->capture_default_str();
    patchify->add_option("--budget", patchify_opts.budget, "variable-mode patch ceiling")
        ->capture_default_str();
    patchify->add_option("--out", patchify_opts.out_dir,
                         "optional directory for the patches.bin dump");

    pixeldoc::MakeTargetsOptions targets_opts;
    CLI::App* targets = app.add_subcommand(
        "make-targets", "Build training examples for one task from a gen-tableqa directory");
    targets->add_option("--task", targets_opts.task, "mae | mdtg | rqa | bb")->required();
    targets->add_option("--in", targets_opts.in_dir, "gen-tableqa output directory")->required();
    targets->add_option("--out", targets_opts.out_dir, "output directory")->required();
    targets->add_option("--seed", targets_opts.seed, "sampling seed")->capture_default_str();

    pixeldoc::PretrainOptions pretrain_opts;
    CLI::App* pretrain = app.add_subcommand(
        "pretrain", "Run the staged curriculum on synthetic data and write a checkpoint");
    pretrain->add_option("--scale", pretrain_opts.scale, "curriculum scale in (0, 1]")
        ->capture_default_str();
    pretrain
        ->add_option("--steps-override", pretrain_opts.steps_override,
                     "exact step count (< 0 runs the full scaled schedule; steps past the "
                     "schedule reuse its final stage)")
        ->capture_default_str();
    pretrain->add_option("--config", pretrain_opts.config_file,
                         "model config JSON (default: built-in config)");
    pretrain->add_option("--out", pretrain_opts.out_dir, "output directory")->required();
    pretrain->add_option("--seed", pretrain_opts.seed, "data + init seed")->capture_default_str();
    pretrain->add_option("--lr", pretrain_opts.lr, "AdamW learning rate")->capture_default_str();
    pretrain->add_option("--warmup", pretrain_opts.warmup_steps, "linear warmup steps")
        ->capture_default_str();

    pixeldoc::EvalOptions eval_opts;
    CLI::App* eval =
        app.add_subcommand("eval", "Score greedy answers of a checkpoint on a table-QA dataset");
    eval->add_option("--checkpoint", eval_opts.checkpoint_path, "checkpoint file")->required();
    eval->add_option("--dataset", eval_opts.dataset_path, "gen-tableqa JSONL")->required();
    eval->add_option("--metrics", eval_opts.metrics, "comma-separated: anls, em, f1, accuracy")
        ->capture_default_str();
    eval->add_option("--resolution", eval_opts.resolution, "square input resolution, px")
        ->capture_default_str();
    eval->add_option("--max-len", eval_opts.max_len, "generation budget per answer")
        ->capture_default_str();
    eval->add_option("--limit", eval_opts.limit, "score only the first N records (0 = all)")
        ->capture_default_str();

    CLI::App* selftest =
        app.add_subcommand("selftest", "Run the cross-module invariant and gradient checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message and usage hint
        return 2;
    }

    try {
        if (gen->parsed()) {
            const std::string path = pixeldoc::run_gen_tableqa(gen_opts);
            std::cout << "wrote " << path << "\n";
        } else if (render->parsed()) {
            const std::string path = pixeldoc::run_render(render_opts);
            std::cout << "wrote " << path << "\n";
        } else if (patchify->parsed()) {
            pixeldoc::run_patchify(patchify_opts, std::cout);
        } else if (targets->parsed()) {
            const std::string path = pixeldoc::run_make_targets(targets_opts);
            std::cout << "wrote " << path << "\n";
        } else if (pretrain->parsed()) {
            const pixeldoc::PretrainOutcome outcome = pixeldoc::run_pretrain(pretrain_opts);
            std::cout << "steps " << outcome.steps;
            if (outcome.steps > 0)
                std::cout << "  first total " << outcome.first_total << "  last total "
                          << outcome.last_total;
            std::cout << "\nwrote " << outcome.checkpoint_path << "\n";
        } else if (eval->parsed()) {
            std::cout << pixeldoc::run_eval(eval_opts) << "\n";
        } else if (selftest->parsed()) {
            pixeldoc::run_selftest(std::cout);
            std::cout << "selftest passed\n";
        }
    } catch (const pixeldoc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
