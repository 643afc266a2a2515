#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pixeldoc/raster.hpp"
#include "pixeldoc/tables.hpp"

namespace pixeldoc {

struct DatasetSample {
    RenderedDocument doc;
    QAPair qa;
    std::uint64_t sample_seed = 0;
};

// Streams n deterministic table-QA samples in index order. Per index i: the
// table comes from generate_table(seed ^ i), then one uniformly random
// applicable template and one uniformly random style preset. Generation is
// sharded across threads internally; the sink always runs on the calling
// thread, in order, so writers need no locking.
void generate_dataset(std::size_t n, std::uint64_t seed, const TableLimits& limits,
                      const std::function<void(std::size_t, DatasetSample&)>& sink);

// Convenience wrapper that collects the whole stream. Meant for small n;
// images are kept in memory.
std::vector<DatasetSample> generate_dataset_vec(std::size_t n, std::uint64_t seed,
                                                const TableLimits& limits);

}  // namespace pixeldoc
