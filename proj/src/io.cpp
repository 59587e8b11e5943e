#include "socest/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string_view>

#include "socest/errors.hpp"

namespace socest {

using nlohmann::json;

namespace {

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_double(std::string_view field, std::size_t line_no) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || field.empty() || !std::isfinite(value))
        throw ParseError("malformed number '" + std::string(field) + "'", line_no);
    return value;
}

// Reads a header-led numeric CSV. Returns rows; `header` receives the names.
std::vector<std::vector<double>> read_numeric_csv(std::istream& in, std::vector<std::string>& header) {
    std::string line;
    if (!std::getline(in, line) || line.empty()) throw ParseError("empty file: missing header row");
    header.clear();
    for (auto f : split(line)) header.emplace_back(f);

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw ParseError("blank line", line_no);
        }
        const auto fields = split(line);
        if (fields.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        std::vector<double> row(fields.size());
        for (std::size_t c = 0; c < fields.size(); ++c) row[c] = parse_double(fields[c], line_no);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "' for reading");
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    return out;
}

double number_field(const json& j, const char* name) {
    if (!j.contains(name)) throw ValidationError(std::string(name) + ": missing field");
    const json& v = j.at(name);
    if (!v.is_number()) throw ValidationError(std::string(name) + ": not a number");
    return v.get<double>();
}

}  // namespace

std::string format_double(double x) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf, static_cast<std::size_t>(n));
}

Profile read_profile(std::istream& in) {
    std::vector<std::string> header;
    const auto rows = read_numeric_csv(in, header);
    const bool with_v = header == std::vector<std::string>{"t", "i", "v"};
    if (!with_v && header != std::vector<std::string>{"t", "i"})
        throw ParseError("profile header must be 't,i' or 't,i,v'", 1);
    if (rows.empty()) throw ParseError("profile has no samples");

    Profile p;
    p.t.reserve(rows.size());
    p.current.reserve(rows.size());
    if (with_v) p.voltage.emplace().reserve(rows.size());
    for (const auto& r : rows) {
        p.t.push_back(r[0]);
        p.current.push_back(r[1]);
        if (with_v) p.voltage->push_back(r[2]);
    }
    p.validate();
    return p;
}

Profile read_profile(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return read_profile(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_profile(std::ostream& out, const Profile& profile) {
    profile.validate();
    out << (profile.has_voltage() ? "t,i,v\n" : "t,i\n");
    for (std::size_t k = 0; k < profile.size(); ++k) {
        out << format_double(profile.t[k]) << ',' << format_double(profile.current[k]);
        if (profile.has_voltage()) out << ',' << format_double((*profile.voltage)[k]);
        out << '\n';
    }
}

void write_profile(const std::filesystem::path& path, const Profile& profile) {
    auto out = open_out(path);
    write_profile(out, profile);
}

Trajectory make_trajectory(const Profile& drive, const std::vector<TrajectoryPoint>& points) {
    if (drive.size() != points.size()) throw DomainError("trajectory: length mismatch");
    Trajectory tr;
    tr.profile.t = drive.t;
    tr.profile.current = drive.current;
    tr.profile.voltage.emplace(points.size());
    tr.states.reserve(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        (*tr.profile.voltage)[k] = points[k].voltage;
        tr.states.push_back(points[k].state);
    }
    return tr;
}

Trajectory read_trajectory(std::istream& in) {
    std::vector<std::string> header;
    const auto rows = read_numeric_csv(in, header);
    if (header != std::vector<std::string>{"t", "i", "v", "z", "v_r1", "v_r2"})
        throw ParseError("trajectory header must be 't,i,v,z,v_r1,v_r2'", 1);
    if (rows.empty()) throw ParseError("trajectory has no samples");
    Trajectory tr;
    tr.profile.voltage.emplace();
    for (const auto& r : rows) {
        tr.profile.t.push_back(r[0]);
        tr.profile.current.push_back(r[1]);
        tr.profile.voltage->push_back(r[2]);
        tr.states.push_back({r[3], r[4], r[5], false});
    }
    tr.profile.validate();
    return tr;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_trajectory(in);
}

void write_trajectory(std::ostream& out, const Trajectory& traj) {
    out << "t,i,v,z,v_r1,v_r2\n";
    const auto& p = traj.profile;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const auto& s = traj.states[k];
        out << format_double(p.t[k]) << ',' << format_double(p.current[k]) << ','
            << format_double((*p.voltage)[k]) << ',' << format_double(s.z) << ','
            << format_double(s.v_r1) << ',' << format_double(s.v_r2) << '\n';
    }
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
    auto out = open_out(path);
    write_trajectory(out, traj);
}

json ocv_to_json(const OcvTable& table) {
    json pairs = json::array();
    for (std::size_t k = 0; k < table.size(); ++k)
        pairs.push_back({table.soc_grid()[k], table.ocv_values()[k]});
    return pairs;
}

OcvTable ocv_from_json(const json& j) {
    if (!j.is_array()) throw ValidationError("ocv: expected an array of [soc, volt] pairs");
    std::vector<double> soc, volt;
    for (const auto& pair : j) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
            throw ValidationError("ocv: each entry must be a [soc, volt] number pair");
        soc.push_back(pair[0].get<double>());
        volt.push_back(pair[1].get<double>());
    }
    return OcvTable(std::move(soc), std::move(volt));
}

json params_to_json(const EcmParams& p) {
    json j;
    j["r0"] = p.r0;
    j["r1"] = p.r1;
    j["c1"] = p.c1;
    j["r2"] = p.r2;
    j["c2"] = p.c2;
    j["q_max"] = p.q_max;
    j["ocv"] = ocv_to_json(p.ocv);
    return j;
}

EcmParams params_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("params: document must be an object");
    if (!j.contains("ocv")) throw ValidationError("ocv: missing field");
    EcmParams p{.r0 = number_field(j, "r0"),
                .r1 = number_field(j, "r1"),
                .c1 = number_field(j, "c1"),
                .r2 = number_field(j, "r2"),
                .c2 = number_field(j, "c2"),
                .q_max = number_field(j, "q_max"),
                .ocv = ocv_from_json(j.at("ocv"))};
    p.validate();
    return p;
}

std::string write_params(const EcmParams& params) {
    params.validate();
    return params_to_json(params).dump(2) + "\n";
}

EcmParams read_params(const std::string& document) {
    json j;
    try {
        j = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("params: ") + e.what());
    }
    return params_from_json(j);
}

void write_params(const std::filesystem::path& path, const EcmParams& params) {
    write_text_file(path, write_params(params));
}

EcmParams read_params_file(const std::filesystem::path& path) { return read_params(read_text_file(path)); }

json fit_report_to_json(const FitReport& r) {
    json j;
    j["params"] = {{"r0", r.params.r0}, {"r1", r.params.r1}, {"c1", r.params.c1},
                   {"r2", r.params.r2}, {"c2", r.params.c2}};
    j["final_rss"] = r.final_rss;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["gradient_norm"] = r.gradient_norm;
    j["objective_trace"] = r.objective_trace;
    return j;
}

void write_bench_csv(std::ostream& out, const BenchResult& result) {
    out << "axis_value,estimator,mae_mean,ci_lo,ci_hi\n";
    for (const auto& row : result.rows) {
        out << format_double(row.axis_value) << ',' << to_string(row.estimator) << ','
            << format_double(row.mae_mean) << ',' << format_double(row.ci_lo) << ','
            << format_double(row.ci_hi) << '\n';
    }
}

void write_bench_csv(const std::filesystem::path& path, const BenchResult& result) {
    auto out = open_out(path);
    write_bench_csv(out, result);
}

json manifest_to_json(const RunManifest& m) {
    json j;
    j["tool_version"] = m.tool_version;
    j["config"] = m.config;
    j["master_seed"] = m.master_seed;
    j["input_digests"] = m.input_digests;
    return j;
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    try {
        m.tool_version = j.at("tool_version").get<std::string>();
        m.config = j.at("config");
        m.master_seed = j.at("master_seed").get<std::uint64_t>();
        m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest: ") + e.what());
    }
    return m;
}

std::string sha256_file(const std::filesystem::path& path) {
    const std::string data = read_text_file(path);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed for '" + path.string() + "'");
    std::ostringstream os;
    for (unsigned int k = 0; k < len; ++k) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[k]);
    return os.str();
}

std::string read_text_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out) throw Error("write to '" + path.string() + "' failed");
}

}  // namespace socest
