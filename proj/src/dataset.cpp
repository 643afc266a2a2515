#include "pixeldoc/dataset.hpp"

#include <algorithm>
#include <exception>

#include "pixeldoc/rng.hpp"

namespace pixeldoc {

namespace {

// Distinct stream salts so the template draw, the QA placeholder draws, and
// the style draw never alias even though they share (seed, i).
constexpr std::uint64_t kTemplateStream = 1;
constexpr std::uint64_t kQaStream = 2;
constexpr std::uint64_t kStyleStream = 3;

DatasetSample make_sample(std::size_t i, std::uint64_t seed, const TableLimits& limits) {
    DatasetSample s;
    s.sample_seed = seed ^ static_cast<std::uint64_t>(i);
    TableSpec table = generate_table(s.sample_seed, limits);

    std::vector<int> applicable;
    for (int t = 1; t <= 11; ++t)
        if (template_applicable(table, t)) applicable.push_back(t);
    Rng tpl_rng(mix_seed(seed, static_cast<std::uint64_t>(i), kTemplateStream));
    int template_id = applicable[tpl_rng.index(applicable.size())];

    s.qa = instantiate_qa(table, template_id,
                          mix_seed(seed, static_cast<std::uint64_t>(i), kQaStream));

    Rng style_rng(mix_seed(seed, static_cast<std::uint64_t>(i), kStyleStream));
    const StylePreset& style = style_presets()[style_rng.index(style_presets().size())];
    s.doc = render_table_image(table, style, s.sample_seed);
    return s;
}

}  // namespace

void generate_dataset(std::size_t n, std::uint64_t seed, const TableLimits& limits,
                      const std::function<void(std::size_t, DatasetSample&)>& sink) {
    if (n < 1) throw_data("dataset size must be at least 1");
    constexpr std::size_t kBlock = 64;
    std::vector<DatasetSample> block;
    for (std::size_t base = 0; base < n; base += kBlock) {
        const std::size_t count = std::min(kBlock, n - base);
        block.assign(count, {});
        std::exception_ptr failure;
#pragma omp parallel for schedule(static)
        for (long long k = 0; k < static_cast<long long>(count); ++k) {
            try {
                block[static_cast<std::size_t>(k)] =
                    make_sample(base + static_cast<std::size_t>(k), seed, limits);
            } catch (...) {
#pragma omp critical
                if (!failure) failure = std::current_exception();
            }
        }
        if (failure) std::rethrow_exception(failure);
        for (std::size_t k = 0; k < count; ++k) sink(base + k, block[k]);
    }
}

std::vector<DatasetSample> generate_dataset_vec(std::size_t n, std::uint64_t seed,
                                                const TableLimits& limits) {
    std::vector<DatasetSample> out;
    out.reserve(n);
    generate_dataset(n, seed, limits,
                     [&](std::size_t, DatasetSample& s) { out.push_back(std::move(s)); });
    return out;
}

}  // namespace pixeldoc
