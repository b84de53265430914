#include "cdk/energy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cdk/error.hpp"

namespace cdk {

PowerTrace parse_trace(const std::string& csv_text) {
    PowerTrace trace;
    std::istringstream in(csv_text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        double t, p;
        if (!(fields >> t >> p)) {
            if (line_no == 1) continue; // header row
            fail("E_PARSE", "malformed trace row at line " + std::to_string(line_no));
        }
        if (p < 0.0)
            fail("E_PARSE", "negative power at line " + std::to_string(line_no));
        if (!trace.samples.empty() && t <= trace.samples.back().t)
            fail("E_PARSE", "non-monotonic timestamps at line " + std::to_string(line_no));
        trace.samples.push_back(PowerSample{t, p});
    }
    if (trace.samples.empty()) fail("E_PARSE", "empty power trace");
    return trace;
}

PowerTrace load_trace_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("E_IO", "cannot open trace file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_trace(buf.str());
}

WorkingPeriod find_working_period(const PowerTrace& trace, double threshold_w, bool bridge_dips) {
    if (trace.samples.empty()) fail("E_VALUE", "empty power trace");

    // Collect maximal >= threshold runs as [start, end] index pairs.
    std::vector<WorkingPeriod> runs;
    const std::size_t n = trace.samples.size();
    std::size_t i = 0;
    while (i < n) {
        if (trace.samples[i].p < threshold_w) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && trace.samples[j + 1].p >= threshold_w) ++j;
        runs.push_back(WorkingPeriod{i, j});
        i = j + 1;
    }
    if (runs.empty())
        fail("E_NO_WORKING_PERIOD", "no sample reaches the " + std::to_string(threshold_w) +
                                        " W threshold");

    if (bridge_dips) {
        std::vector<WorkingPeriod> merged;
        for (const WorkingPeriod& run : runs) {
            if (!merged.empty() && run.start - merged.back().end - 1 < 3)
                merged.back().end = run.end;
            else
                merged.push_back(run);
        }
        runs = std::move(merged);
    }

    const WorkingPeriod* best = &runs.front();
    for (const WorkingPeriod& run : runs)
        if (run.sample_count() > best->sample_count()) best = &run;
    return *best;
}

double middle_third_average(const PowerTrace& trace, const WorkingPeriod& period) {
    if (period.end >= trace.samples.size() || period.start > period.end)
        fail("E_VALUE", "working period out of range");
    const std::size_t length = period.sample_count();
    if (length < 3) fail("E_VALUE", "working period too short for a middle third");

    const std::size_t lo = (length + 2) / 3;     // ceil(L/3)
    const std::size_t hi = (2 * length) / 3;     // floor(2L/3)
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += trace.samples[period.start + i].p;
    return acc / static_cast<double>(hi - lo);
}

double energy_per_frame(double avg_power_w, double fps) {
    if (!(fps > 0.0)) fail("E_VALUE", "fps must be positive");
    return avg_power_w / fps;
}

double fps_from_count(std::int64_t frames, double seconds) {
    if (!(seconds > 0.0)) fail("E_VALUE", "duration must be positive");
    if (frames < 0) fail("E_VALUE", "frame count must be non-negative");
    return static_cast<double>(frames) / seconds;
}

std::string energy_report_to_json(const EnergyReport& report) {
    nlohmann::json j = {{"avg_power_w", report.avg_power_w},
                        {"fps", report.fps},
                        {"joules_per_frame", report.joules_per_frame},
                        {"period_start_s", report.period_start_s},
                        {"period_end_s", report.period_end_s}};
    return j.dump(2) + "\n";
}

std::string energy_report_to_text(const EnergyReport& report) {
    char line[256];
    std::snprintf(line, sizeof(line),
                  "avg_power_w %.6g\nfps %.6g\njoules_per_frame %.6g\nperiod_start_s %.6g\n"
                  "period_end_s %.6g\n",
                  report.avg_power_w, report.fps, report.joules_per_frame, report.period_start_s,
                  report.period_end_s);
    return std::string(line);
}

} // namespace cdk
