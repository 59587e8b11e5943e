#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "socest/errors.hpp"
#include "socest/io.hpp"

using namespace socest;

namespace {

Profile parse(const std::string& text) {
    std::istringstream in(text);
    return read_profile(in);
}

double wild(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> m(-1.0, 1.0);
    std::uniform_int_distribution<int> e(-30, 30);
    return std::ldexp(m(rng), e(rng));
}

Profile random_profile(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> len(1, 60);
    std::uniform_real_distribution<double> step(1e-6, 100.0);
    const int n = len(rng);
    Profile p;
    double t = wild(rng);
    for (int k = 0; k < n; ++k) {
        p.t.push_back(t);
        p.current.push_back(wild(rng));
        t += step(rng);
    }
    if (rng() & 1) {
        std::vector<double> v;
        for (int k = 0; k < n; ++k) v.push_back(wild(rng));
        p.voltage = v;
    }
    return p;
}

EcmParams random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    EcmParams p = default_cell();
    p.r0 = 1e-4 + u(rng);
    p.r1 = 1e-4 + u(rng);
    p.c1 = 1.0 + 1e5 * u(rng);
    p.r2 = 1e-4 + u(rng);
    p.c2 = 1.0 + 1e5 * u(rng);
    p.q_max = 1.0 + 1e6 * u(rng);
    std::uniform_int_distribution<int> nodes(2, 80);
    const int n = nodes(rng);
    std::vector<double> grid{0.0}, volts{2.5 + u(rng)};
    for (int k = 1; k < n - 1; ++k) grid.push_back(grid.back() + (1.0 - grid.back()) * (0.01 + 0.1 * u(rng)));
    grid.push_back(1.0);
    while (volts.size() < grid.size()) volts.push_back(volts.back() + 1e-4 + 0.1 * u(rng));
    p.ocv = OcvTable(grid, volts);
    return p;
}

}  // namespace

TEST_CASE("read_profile examples") {
    const Profile a = parse("t,i,v\n0,1.0,3.7\n1,1.0,3.69\n");
    REQUIRE(a.size() == 2);
    REQUIRE(a.has_voltage());
    CHECK((*a.voltage)[1] == 3.69);
    CHECK(a.current[0] == 1.0);

    const Profile b = parse("t,i\n0,0.5\n1,0.5");
    CHECK(b.size() == 2);
    CHECK_FALSE(b.has_voltage());

    CHECK_THROWS_AS(parse("t,i\n0,1\r\n"), ParseError);
}

TEST_CASE("read_profile errors") {
    const auto line_of = [](const std::string& text) -> std::string {
        try {
            parse(text);
        } catch (const ParseError& e) {
            return e.what();
        }
        return "no error";
    };
    CHECK(line_of("t,i,v\n0,1,3.7\n1,abc,3.6\n").find("line 3") != std::string::npos);
    CHECK(line_of("t,i,v\n0,1\n").find("line 2") != std::string::npos);
    CHECK(line_of("t,i\n0,1,2\n").find("line 2") != std::string::npos);
    CHECK(line_of("t,i\n0,1\n\n2,1\n").find("line 3") != std::string::npos);
    CHECK(line_of("time,current\n0,1\n").find("line 1") != std::string::npos);
    CHECK(line_of("t,i\n0,1e999\n").find("line 2") != std::string::npos);
    CHECK(line_of("t,i\n0,nan\n").find("line 2") != std::string::npos);
    CHECK_THROWS_AS(parse(""), ParseError);
    CHECK_THROWS_AS(parse("t,i,v\n"), Error);
    CHECK_THROWS_AS(parse("t,i\n1,0\n1,0\n"), ValidationError);
    CHECK_THROWS_AS(parse("t,i\n2,0\n1,0\n"), ValidationError);
    CHECK_THROWS_AS(read_profile(std::filesystem::path("/nonexistent/p.csv")), Error);
}

TEST_CASE("profile round trip on 1000 random profiles") {
    std::mt19937_64 rng(314);
    for (int n = 0; n < 1000; ++n) {
        const Profile p = random_profile(rng);
        std::ostringstream out;
        write_profile(out, p);
        std::istringstream in(out.str());
        const Profile q = read_profile(in);
        REQUIRE(q == p);
    }
}

TEST_CASE("params documents") {
    const EcmParams cell = default_cell();
    const EcmParams back = read_params(write_params(cell));
    CHECK(back.r0 == cell.r0);
    CHECK(back.ocv.ocv_values() == cell.ocv.ocv_values());

    const std::string minimal =
        R"({"r0": 0.01, "r1": 0.01, "c1": 1000, "r2": 0.02, "c2": 20000, "q_max": 3600,
            "ocv": [[0, 3.0], [1, 4.2]]})";
    const EcmParams m = read_params(minimal);
    CHECK(m.q_max == 3600.0);
    CHECK(m.ocv.lookup(0.5) == doctest::Approx(3.6));

    const auto message = [](const std::string& doc) -> std::string {
        try {
            read_params(doc);
        } catch (const Error& e) {
            return e.what();
        }
        return "no error";
    };
    nlohmann::json j = nlohmann::json::parse(minimal);
    j["r0"] = -0.01;
    CHECK(message(j.dump()).find("r0") != std::string::npos);
    j = nlohmann::json::parse(minimal);
    j.erase("c2");
    CHECK(message(j.dump()).find("c2") != std::string::npos);
    j = nlohmann::json::parse(minimal);
    j["q_max"] = "lots";
    CHECK(message(j.dump()).find("q_max") != std::string::npos);
    j = nlohmann::json::parse(minimal);
    j["ocv"] = {{0, 3.0}, {0.5, 2.9}, {1, 4.2}};
    CHECK(message(j.dump()).find("ocv") != std::string::npos);
    CHECK_THROWS_AS(read_params("{not json"), ParseError);
}

TEST_CASE("params round trip on 1000 random documents") {
    std::mt19937_64 rng(2718);
    for (int n = 0; n < 1000; ++n) {
        const EcmParams p = random_params(rng);
        const EcmParams q = read_params(write_params(p));
        REQUIRE(q.r0 == p.r0);
        REQUIRE(q.r1 == p.r1);
        REQUIRE(q.c1 == p.c1);
        REQUIRE(q.r2 == p.r2);
        REQUIRE(q.c2 == p.c2);
        REQUIRE(q.q_max == p.q_max);
        REQUIRE(q.ocv.soc_grid() == p.ocv.soc_grid());
        REQUIRE(q.ocv.ocv_values() == p.ocv.ocv_values());
    }
}

TEST_CASE("format_double is lossless") {
    std::mt19937_64 rng(5);
    for (int n = 0; n < 1000; ++n) {
        const double x = wild(rng);
        CHECK(std::stod(format_double(x)) == x);
    }
}

TEST_CASE("trajectory round trip") {
    const EcmParams cell = default_cell();
    const Profile drive = Profile::uniform({0.0, -2.0, -2.0, 1.0, 0.0});
    const Trajectory tr = make_trajectory(drive, simulate(cell, {0.5, 0, 0, false}, drive));
    std::ostringstream out;
    write_trajectory(out, tr);
    CHECK(out.str().rfind("t,i,v,z,v_r1,v_r2\n", 0) == 0);
    std::istringstream in(out.str());
    const Trajectory back = read_trajectory(in);
    CHECK(back.profile == tr.profile);
    REQUIRE(back.states.size() == tr.states.size());
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
        CHECK(back.states[k].z == tr.states[k].z);
        CHECK(back.states[k].v_r2 == tr.states[k].v_r2);
    }
}

TEST_CASE("bench csv") {
    BenchResult r;
    r.axis = SweepAxis::WindowSize;
    r.rows.push_back({64, EstimatorKind::AekfMle, 0.25, 0.2, 0.3});
    r.rows.push_back({64, EstimatorKind::CoulombCounting, 5, 5, 5});
    std::ostringstream out;
    write_bench_csv(out, r);
    CHECK(out.str() ==
          "axis_value,estimator,mae_mean,ci_lo,ci_hi\n"
          "64,aekf-mle,0.25,0.20000000000000001,0.29999999999999999\n"
          "64,cc,5,5,5\n");
}

TEST_CASE("manifest") {
    RunManifest m;
    m.tool_version = "1.2.3";
    m.config = {{"window", 128}, {"axis", "noise_power"}};
    m.master_seed = 0xFFFFFFFFFFFFFFFFull;
    m.input_digests["a.csv"] = std::string(64, 'a');
    CHECK(manifest_from_json(nlohmann::json::parse(manifest_to_json(m).dump())) == m);

    const auto dir = std::filesystem::temp_directory_path() / "socest_io_test";
    std::filesystem::create_directories(dir);
    write_text_file(dir / "abc.txt", "abc");
    CHECK(sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(read_text_file(dir / "abc.txt") == "abc");
    write_text_file(dir / "empty.txt", "");
    CHECK(sha256_file(dir / "empty.txt") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    std::filesystem::remove_all(dir);
}
