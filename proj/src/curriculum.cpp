#include "pixeldoc/curriculum.hpp"

#include <cmath>

#include "json.hpp"
#include "pixeldoc/common.hpp"
#include "pixeldoc/rng.hpp"

namespace pixeldoc {

namespace {

constexpr std::uint64_t kTaskSampleSalt = 0x7a5ce11e;

long long scaled_count(double scale, long long full) {
    const long long n = std::llround(scale * static_cast<double>(full));
    return n < 1 ? 1 : n;
}

}  // namespace

std::string_view curriculum_task_name(CurriculumTask task) {
    switch (task) {
        case CurriculumTask::MAE: return "mae";
        case CurriculumTask::MDTG: return "mdtg";
        case CurriculumTask::RQA: return "rqa";
        case CurriculumTask::BB: return "bb";
        case CurriculumTask::TABLEQA: return "tableqa";
    }
    throw_data("unknown curriculum task");
}

long long CurriculumSchedule::total_steps() const {
    long long total = 0;
    for (const auto& stage : stages) total += stage.steps;
    return total;
}

std::array<long long, 4> CurriculumSchedule::boundaries() const {
    std::array<long long, 4> ends{};
    long long total = 0;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        total += stages[i].steps;
        ends[i] = total;
    }
    return ends;
}

std::string CurriculumSchedule::to_json() const {
    nlohmann::json j;
    j["scale"] = scale;
    j["total_steps"] = total_steps();
    j["stages"] = nlohmann::json::array();
    long long first = 0;
    for (const auto& stage : stages) {
        nlohmann::json s;
        s["index"] = stage.index;
        s["steps"] = stage.steps;
        s["resolution"] = stage.resolution;
        s["batch_size"] = stage.batch_size;
        s["first_step"] = first;
        s["end_step"] = first + stage.steps;
        s["active_tasks"] = nlohmann::json::array();
        for (const auto task : stage.active_tasks)
            s["active_tasks"].push_back(std::string(curriculum_task_name(task)));
        j["stages"].push_back(std::move(s));
        first += stage.steps;
    }
    return j.dump(2);
}

CurriculumSchedule pretraining_schedule(double scale) {
    if (!(scale > 0.0) || scale > 1.0) throw_data("scale must be inside (0, 1]");

    const std::array<long long, 4> full_steps = {50000, 350000, 55000, 150000};
    const std::array<int, 4> resolutions = {224, 224, 896, 896};
    const std::array<long long, 4> full_batches = {1024, 1024, 256, 256};
    const std::array<std::vector<CurriculumTask>, 4> tasks = {{
        {CurriculumTask::MAE, CurriculumTask::MDTG},
        {CurriculumTask::MAE, CurriculumTask::MDTG, CurriculumTask::RQA},
        {CurriculumTask::MAE, CurriculumTask::MDTG, CurriculumTask::RQA},
        {CurriculumTask::MAE, CurriculumTask::MDTG, CurriculumTask::RQA, CurriculumTask::BB,
         CurriculumTask::TABLEQA},
    }};

    CurriculumSchedule schedule;
    schedule.scale = scale;
    for (int i = 0; i < 4; ++i) {
        auto& stage = schedule.stages[static_cast<std::size_t>(i)];
        stage.index = i + 1;
        stage.steps = scaled_count(scale, full_steps[static_cast<std::size_t>(i)]);
        stage.resolution = resolutions[static_cast<std::size_t>(i)];
        stage.batch_size = scaled_count(scale, full_batches[static_cast<std::size_t>(i)]);
        stage.active_tasks = tasks[static_cast<std::size_t>(i)];
    }
    return schedule;
}

const StageSpec& stage_at(const CurriculumSchedule& schedule, long long step) {
    if (step < 0 || step >= schedule.total_steps()) throw_data("step out of range");
    long long end = 0;
    for (const auto& stage : schedule.stages) {
        end += stage.steps;
        if (step < end) return stage;
    }
    throw_data("step out of range");
}

CurriculumTask sample_task(const CurriculumSchedule& schedule, long long step,
                           std::uint64_t seed) {
    const StageSpec& stage = stage_at(schedule, step);
    if (stage.active_tasks.empty()) throw_data("stage has no active tasks");
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(step), kTaskSampleSalt));
    return stage.active_tasks[rng.index(stage.active_tasks.size())];
}

}  // namespace pixeldoc
