#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cdk {

struct PowerSample {
    double t = 0.0; // seconds
    double p = 0.0; // watts
};

/// Timestamped wattage samples with strictly increasing time.
struct PowerTrace {
    std::vector<PowerSample> samples;
};

/// Inclusive sample-index span of the detected working region.
struct WorkingPeriod {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t sample_count() const { return end - start + 1; }
};

struct EnergyReport {
    double avg_power_w = 0.0;      // mean over the middle third of the period
    double fps = 0.0;
    double joules_per_frame = 0.0; // avg_power_w / fps
    double period_start_s = 0.0;
    double period_end_s = 0.0;
};

/// CSV rows `t_s,power_w`; one optional header row is skipped.
PowerTrace parse_trace(const std::string& csv_text);
PowerTrace load_trace_file(const std::filesystem::path& path);

/// Longest contiguous run of samples at or above the threshold. With
/// bridge_dips, runs separated by fewer than 3 sub-threshold samples merge
/// (endpoints stay at >= threshold samples).
WorkingPeriod find_working_period(const PowerTrace& trace, double threshold_w = 20.0,
                                  bool bridge_dips = false);

/// Mean of the samples in the middle third of the period: relative indices
/// [ceil(L/3), floor(2L/3)) for an L-sample period. Needs L >= 3.
double middle_third_average(const PowerTrace& trace, const WorkingPeriod& period);

double energy_per_frame(double avg_power_w, double fps);

double fps_from_count(std::int64_t frames, double seconds);

std::string energy_report_to_json(const EnergyReport& report);
std::string energy_report_to_text(const EnergyReport& report);

} // namespace cdk
