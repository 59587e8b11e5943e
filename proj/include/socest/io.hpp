#pragma once

// Persistence formats:
//   profile CSV     header "t,i" or "t,i,v"
//   trajectory CSV  header "t,i,v,z,v_r1,v_r2"
//   params JSON     r0, r1, c1, r2, c2, q_max, ocv: [[soc, volt], ...]
//   bench CSV       header "axis_value,estimator,mae_mean,ci_lo,ci_hi"
// Floating values are written so that reading them back is bit-exact.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <json.hpp>
#include <string>
#include <vector>

#include "socest/bench.hpp"
#include "socest/ecm.hpp"
#include "socest/fitting.hpp"

namespace socest {

// 17 significant digits ("%.17g").
std::string format_double(double x);

Profile read_profile(std::istream& in);
Profile read_profile(const std::filesystem::path& path);
void write_profile(std::ostream& out, const Profile& profile);
void write_profile(const std::filesystem::path& path, const Profile& profile);

struct Trajectory {
    Profile profile;  // t, i and terminal voltage
    std::vector<CellState> states;
};

Trajectory make_trajectory(const Profile& drive, const std::vector<TrajectoryPoint>& points);
Trajectory read_trajectory(std::istream& in);
Trajectory read_trajectory(const std::filesystem::path& path);
void write_trajectory(std::ostream& out, const Trajectory& traj);
void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);

nlohmann::json ocv_to_json(const OcvTable& table);
OcvTable ocv_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const EcmParams& params);
// Re-validates every invariant; errors name the offending field.
EcmParams params_from_json(const nlohmann::json& j);

std::string write_params(const EcmParams& params);
EcmParams read_params(const std::string& document);
void write_params(const std::filesystem::path& path, const EcmParams& params);
EcmParams read_params_file(const std::filesystem::path& path);

nlohmann::json fit_report_to_json(const FitReport& report);

void write_bench_csv(std::ostream& out, const BenchResult& result);
void write_bench_csv(const std::filesystem::path& path, const BenchResult& result);

struct RunManifest {
    std::string tool_version;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t master_seed = 0;
    std::map<std::string, std::string> input_digests;  // path -> sha256 hex

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

std::string sha256_file(const std::filesystem::path& path);

// Text file helpers; throw Error with the path on failure.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace socest
