#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "singmax/experiment.hpp"

using namespace singmax;

namespace {
ExperimentConfig parse_text(const std::string& text) {
    std::istringstream is(text);
    IniFile ini = IniFile::parse(is, "test.ini");
    return ExperimentConfig::from_ini(ini);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}
} // namespace

TEST_CASE("ini parser reports line and column") {
    std::istringstream bad1("[experiment]\nkind coupled\n");
    CHECK_THROWS_WITH_AS(IniFile::parse(bad1, "c.ini"), doctest::Contains("c.ini:2:1"),
                         config_error);
    std::istringstream bad2("[experiment\nkind = coupled\n");
    CHECK_THROWS_WITH_AS(IniFile::parse(bad2, "c.ini"), doctest::Contains("unterminated"),
                         config_error);
    std::istringstream bad3("kind = coupled\n");
    CHECK_THROWS_WITH_AS(IniFile::parse(bad3, "c.ini"), doctest::Contains("outside any"),
                         config_error);
    std::istringstream bad4("[regime]\ngamma = abc\n");
    IniFile f = IniFile::parse(bad4, "c.ini");
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_ini(f), doctest::Contains("cannot parse number"),
                         config_error);
}

TEST_CASE("unknown keys are rejected") {
    CHECK_THROWS_WITH_AS(parse_text("[experiment]\nkind = coupled\ntypo_key = 3\n"),
                         doctest::Contains("unknown key 'experiment.typo_key'"), config_error);
}

TEST_CASE("regime admissibility is enforced before any solve") {
    CHECK_THROWS_WITH_AS(parse_text("[regime]\ngamma = 0.5\nr = 0.2\n"),
                         doctest::Contains("r > max(0, 1-gamma)"), config_error);
    // one bad sweep point poisons the whole sweep upfront
    CHECK_THROWS_WITH_AS(
        parse_text("[experiment]\nkind = sweep\n[sweep]\ngammas = 0.5 0.4\nrs = 0.3\n"),
        doctest::Contains("r > max(0, 1-gamma)"), config_error);
}

TEST_CASE("defaults and echo") {
    ExperimentConfig cfg = parse_text("[experiment]\nkind = coupled\n");
    CHECK(cfg.system.resolution == 257);
    CHECK(cfg.system.sched.c0 == 10.0);
    CHECK(cfg.system.sigma == 20.0);
    CHECK(cfg.system.params.gamma == 0.5);
    const json j = cfg.echo();
    CHECK(j["regime"]["tau"] == doctest::Approx(2.0 / 1.5));
    CHECK(j["solver"]["sigma"] == 20.0);
}

TEST_CASE("single experiment produces artifacts and passing gates") {
    ExperimentConfig cfg = parse_text("[experiment]\n"
                                      "kind = single\n"
                                      "output = test_runs/single\n"
                                      "[regime]\ngamma = 0.5\nr = 1\n"
                                      "[mesh]\nresolution = 129\n"
                                      "[single]\nv = const:1\n");
    std::filesystem::remove_all("test_runs/single");
    std::ostringstream log;
    CHECK(run_experiment(cfg, log) == 0);
    for (const char* f : {"config.json", "u.csv", "v.csv", "trace.csv", "diagnostics.json"})
        CHECK(std::filesystem::exists(std::filesystem::path("test_runs/single") / f));
    const json d = read_json_file("test_runs/single/diagnostics.json");
    CHECK(d["all_pass"] == true);
    bool cap_seen = false, pos_seen = false;
    for (const auto& g : d["gates"]) {
        if (g["name"] == "linfty-cap") {
            cap_seen = true;
            CHECK(g["status"] == "pass");
        }
        if (g["name"] == "interior-positivity") {
            pos_seen = true;
            CHECK(g["status"] == "pass");
        }
    }
    CHECK(cap_seen);
    CHECK(pos_seen);
}

TEST_CASE("rerun with the same config reproduces artifacts byte for byte") {
    ExperimentConfig cfg = parse_text("[experiment]\n"
                                      "kind = coupled\n"
                                      "output = test_runs/repro\n"
                                      "seed = 11\n"
                                      "[regime]\ngamma = 0.5\nr = 1\n"
                                      "[mesh]\nresolution = 65\n");
    std::filesystem::remove_all("test_runs/repro");
    std::ostringstream log;
    REQUIRE(run_experiment(cfg, log) == 0);
    std::map<std::string, std::string> first;
    for (const auto& e : std::filesystem::directory_iterator("test_runs/repro"))
        if (e.is_regular_file()) first[e.path().filename().string()] = slurp(e.path());
    REQUIRE(run_experiment(cfg, log) == 0);
    for (const auto& [name, bytes] : first)
        CHECK(slurp(std::filesystem::path("test_runs/repro") / name) == bytes);
}

TEST_CASE("plot data emission") {
    ExperimentConfig cfg = parse_text("[experiment]\n"
                                      "kind = coupled\n"
                                      "output = test_runs/plot\n"
                                      "[regime]\ngamma = 2\nr = 1\n"
                                      "[mesh]\nresolution = 129\n");
    std::filesystem::remove_all("test_runs/plot");
    std::ostringstream log;
    REQUIRE(run_experiment(cfg, log) == 0);
    emit_plot_data("test_runs/plot");
    const CsvTable bl = CsvTable::read("test_runs/plot/plot/boundary_layer.csv");
    CHECK(bl.header == std::vector<std::string>{"d", "u", "log_d", "log_u"});
    CHECK(bl.rows.size() > 100);
    const CsvTable cont = CsvTable::read("test_runs/plot/plot/continuation.csv");
    CHECK(cont.header == std::vector<std::string>{"n", "h1"});
    CHECK(cont.rows.size() == 3);

    std::filesystem::remove_all("test_runs/empty");
    ensure_dir("test_runs/empty");
    CHECK_THROWS_WITH_AS(emit_plot_data("test_runs/empty"), doctest::Contains("incomplete run"),
                         config_error);
}

TEST_CASE("saddle experiment emits curves") {
    ExperimentConfig cfg = parse_text("[experiment]\n"
                                      "kind = saddle\n"
                                      "output = test_runs/saddle\n"
                                      "[regime]\ngamma = 0.5\nr = 1\n"
                                      "[mesh]\nresolution = 65\n"
                                      "[saddle]\ndirections = 5\nt_max = 1024\n");
    std::filesystem::remove_all("test_runs/saddle");
    std::ostringstream log;
    CHECK(run_experiment(cfg, log) == 0);
    emit_plot_data("test_runs/saddle");
    const CsvTable sc = CsvTable::read("test_runs/saddle/plot/saddle_curves.csv");
    CHECK(sc.header == std::vector<std::string>{"direction_id", "t", "J"});
    CHECK(sc.rows.size() > 10);
}

TEST_CASE("sweep experiment writes a summary") {
    ExperimentConfig cfg = parse_text("[experiment]\n"
                                      "kind = sweep\n"
                                      "output = test_runs/sweep\n"
                                      "[mesh]\nresolution = 65\n"
                                      "[sweep]\ngammas = 0.5 2\nrs = 1\nresolutions = 65\n");
    std::filesystem::remove_all("test_runs/sweep");
    std::ostringstream log;
    CHECK(run_experiment(cfg, log) == 0);
    const CsvTable s = CsvTable::read("test_runs/sweep/summary.csv");
    CHECK(s.rows.size() == 2);
    CHECK(std::filesystem::exists("test_runs/sweep/g0.5_r1_res65/u.csv"));
    CHECK(std::filesystem::exists("test_runs/sweep/g2_r1_res65/u.csv"));
    for (const auto& r : s.rows) CHECK(r[s.col("status")] == "pass");
}

TEST_CASE("refinement experiment checks the energy dichotomy") {
    ExperimentConfig cfg = parse_text("[experiment]\n"
                                      "kind = refinement\n"
                                      "output = test_runs/refine\n"
                                      "[regime]\ngamma = 0.5\nr = 1\n"
                                      "[refinement]\nresolutions = 33 65 129\n");
    std::filesystem::remove_all("test_runs/refine");
    std::ostringstream log;
    CHECK(run_experiment(cfg, log) == 0);
    const CsvTable t = CsvTable::read("test_runs/refine/refinement.csv");
    CHECK(t.rows.size() == 3);
}

TEST_CASE("uniqueness experiment kind") {
    ExperimentConfig cfg = parse_text("[experiment]\n"
                                      "kind = uniqueness\n"
                                      "output = test_runs/uni\n"
                                      "[regime]\ngamma = 0.5\nr = 1\n"
                                      "[mesh]\nresolution = 65\n"
                                      "[uniqueness]\ntrials = 2\n");
    std::filesystem::remove_all("test_runs/uni");
    std::ostringstream log;
    CHECK(run_experiment(cfg, log) == 0);
    const json u = read_json_file("test_runs/uni/uniqueness.json");
    CHECK(u["gated"] == true);
    CHECK(u["max_u_distance"].get<double>() < 1e-7);
}

TEST_CASE("every gate maps to exactly one anchor") {
    ExperimentConfig cfg = parse_text("[experiment]\n"
                                      "kind = coupled\n"
                                      "output = test_runs/anchors\n"
                                      "[regime]\ngamma = 2\nr = 1\n"
                                      "[mesh]\nresolution = 65\n");
    std::filesystem::remove_all("test_runs/anchors");
    std::ostringstream log;
    REQUIRE(run_experiment(cfg, log) == 0);
    const json d = read_json_file("test_runs/anchors/diagnostics.json");
    std::map<std::string, std::string> name_to_anchor;
    for (const auto& g : d["gates"]) {
        const std::string name = g["name"], anchor = g["anchor"];
        CHECK_FALSE(anchor.empty());
        if (name_to_anchor.count(name)) CHECK(name_to_anchor[name] == anchor);
        name_to_anchor[name] = anchor;
    }
    CHECK(name_to_anchor.size() >= 8);
}

TEST_CASE("operator diagnostics on request") {
    ExperimentConfig cfg = parse_text("[experiment]\n"
                                      "kind = single\n"
                                      "output = test_runs/opdiag\n"
                                      "[regime]\ngamma = 0.5\nr = 1\n"
                                      "[mesh]\nresolution = 129\n"
                                      "[coefficients]\na = sin-perturbed:0.5\n"
                                      "[diagnostics]\noperator = 1\n");
    std::filesystem::remove_all("test_runs/opdiag");
    std::ostringstream log;
    REQUIRE(run_experiment(cfg, log) == 0);
    const json op = read_json_file("test_runs/opdiag/operator.json");
    CHECK(op["alpha"].get<double>() == doctest::Approx(0.5).epsilon(0.01));
    CHECK(op["beta"].get<double>() == doctest::Approx(1.5).epsilon(0.01));
    const double l = op["lambda1"].get<double>();
    CHECK(l >= 0.5 * M_PI * M_PI * 0.99);
    CHECK(l <= 1.5 * M_PI * M_PI * 1.01);
    CHECK(op["c1"].get<double>() > 0.0);
    CHECK(op["c2"].get<double>() >= op["c1"].get<double>());
}

TEST_CASE("sweep output is independent of the worker count") {
    const std::string text = "[experiment]\n"
                             "kind = sweep\n"
                             "seed = 5\n"
                             "[mesh]\nresolution = 65\n"
                             "[sweep]\ngammas = 0.5 1 2\nrs = 1\nresolutions = 65\n";
    auto run_with = [&](const char* workers, const std::string& out) {
        setenv("SINGMAX_WORKERS", workers, 1);
        ExperimentConfig cfg = parse_text(text);
        cfg.output_dir = out;
        std::filesystem::remove_all(out);
        std::ostringstream log;
        REQUIRE(run_experiment(cfg, log) == 0);
        return slurp(std::filesystem::path(out) / "summary.csv");
    };
    const std::string serial = run_with("1", "test_runs/sweep_w1");
    const std::string parallel = run_with("4", "test_runs/sweep_w4");
    unsetenv("SINGMAX_WORKERS");
    CHECK(serial == parallel);
}

TEST_CASE("file-level entry point distinguishes usage errors") {
    std::ostringstream log;
    CHECK(run_experiment_file("does_not_exist.ini", log) == 2);
    const std::string path = "test_runs/bad.ini";
    ensure_dir("test_runs");
    open_out(path) << "[regime]\ngamma = 0.5\nr = 0.1\n";
    CHECK(run_experiment_file(path, log) == 2);
}
