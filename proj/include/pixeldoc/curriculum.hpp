#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pixeldoc {

// Tasks the four-stage schedule can hand out. Synthetic table QA enters as
// its own samplable task in the final stage; it trains through the rendered
// question-answering example format.
enum class CurriculumTask { MAE, MDTG, RQA, BB, TABLEQA };

std::string_view curriculum_task_name(CurriculumTask task);

struct StageSpec {
    int index = 0;  // 1-based
    long long steps = 0;
    int resolution = 0;  // square render side: 224 or 896
    std::vector<CurriculumTask> active_tasks;
    long long batch_size = 0;
};

struct CurriculumSchedule {
    std::array<StageSpec, 4> stages;
    double scale = 1.0;

    long long total_steps() const;
    // Cumulative end step of each stage (half-open intervals).
    std::array<long long, 4> boundaries() const;
    std::string to_json() const;
};

// The four-stage schedule: reconstruction + full-text generation at low
// resolution, then rendered QA joins, then the same mix at high resolution,
// and finally box prediction plus synthetic table QA. Step and batch counts
// are the full-scale values (50k/350k/55k/150k at batch 1024/1024/256/256)
// scaled by `scale`, each clamped to at least 1.
CurriculumSchedule pretraining_schedule(double scale);

// Stage owning `step` under the half-open cumulative intervals.
const StageSpec& stage_at(const CurriculumSchedule& schedule, long long step);

// Uniform seeded draw from the active task set of the stage owning `step`.
// Pure function of (schedule, step, seed).
CurriculumTask sample_task(const CurriculumSchedule& schedule, long long step,
                           std::uint64_t seed);

}  // namespace pixeldoc
