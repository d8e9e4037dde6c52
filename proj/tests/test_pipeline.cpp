#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "morphprint/io.hpp"
#include "morphprint/pipeline.hpp"
#include "morphprint/primitives.hpp"
#include "support.hpp"

using namespace morphprint;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Sorted relative paths and contents of every file under `root`.
std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& root)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            out.emplace_back(fs::relative(e.path(), root).generic_string(), io::read_text(e.path()));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct HandScene {
    SyntheticHand hand;
    GraspSpace space;

    HandScene()
    {
        SyntheticHandOptions opt;
        opt.schedule_rows = 3;
        hand = make_synthetic_hand(opt);
        GraspSpaceOptions g;
        g.monte_carlo_samples = 5000;
        g.reach_margin = 1.3;
        space = build_grasp_space(hand.mesh, g);
    }
};

const HandScene& scene()
{
    static const HandScene s;
    return s;
}

} // namespace

TEST_SUITE("pipeline")
{
    TEST_CASE("SHA-256 digests")
    {
        CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    TEST_CASE("config hash changes iff an effective setting changes")
    {
        const RunConfig base;
        const auto h0 = base.hash();
        CHECK(RunConfig::from_json(base.to_json(), "/").hash() == h0);

        RunConfig moved = base;
        moved.output = "/somewhere/else";
        CHECK(moved.hash() == h0);

        std::vector<RunConfig> variants(8, base);
        variants[0].seed = 43;
        variants[1].material.density += 1.0;
        variants[2].slicer.pattern = InfillPattern::Grid;
        variants[3].training.options.epochs += 1;
        variants[4].optimizer.options.population += 2;
        variants[5].bounds.upper[2] = 70.0;
        variants[6].grasp_space.reach_margin = 1.2;
        variants[7].mesh = "/tmp/other.stl";
        std::vector<std::string> hashes{h0};
        for (const auto& v : variants) {
            hashes.push_back(v.hash());
        }
        std::sort(hashes.begin(), hashes.end());
        CHECK(std::unique(hashes.begin(), hashes.end()) == hashes.end());
    }

    TEST_CASE("JSON round trip keeps every setting")
    {
        RunConfig c;
        c.seed = 7;
        c.output = "/runs/a";
        c.process.velocity = 33.0;
        c.slicer.support.overhang_threshold = 0.5;
        c.training.process_samples = 3;
        c.optimizer.use_network = false;
        c.laplacian.mode = WeightMode::GaussUniform;
        c.power_logs[2] = "/data/log2.csv";
        const auto back = RunConfig::from_json(c.to_json(), "/");
        CHECK(back.to_json() == c.to_json());
        CHECK(back.seed == 7);
        CHECK(back.power_logs.at(2) == fs::path("/data/log2.csv"));
        CHECK(back.slicer.support.overhang_threshold == doctest::Approx(0.5));
    }

    TEST_CASE("seed reaches every stochastic component")
    {
        RunConfig c;
        c.seed = 1234;
        CHECK(c.grasp_options().seed == 1234);
        CHECK(c.train_options().seed == 1234);
        CHECK(c.nsga_options().seed == 1234);
    }

    TEST_CASE("parse problems are reported together")
    {
        const json j = {{"seed", "forty-two"},
                        {"colour", "red"},
                        {"material", {{"density", "heavy"}, {"hue", 3}}},
                        {"optimizer", {{"population", -4}}}};
        try {
            RunConfig::from_json(j, "/");
            FAIL("bad config accepted");
        } catch (const ConfigError& e) {
            CHECK(e.problems().size() == 5);
            const std::string all = e.what();
            for (const char* key : {"seed", "colour", "material.density", "material.hue", "optimizer.population"}) {
                CHECK_MESSAGE(all.find(key) != std::string::npos, key);
            }
        }
        std::vector<std::string> problems;
        const auto c = RunConfig::from_json(j, "/", &problems);
        CHECK(problems.size() == 5);
        CHECK(c.seed == 42);
    }

    TEST_CASE("validation lists every violation")
    {
        RunConfig c;
        c.material.density = -1.0;
        c.slicer.resolution = 4;
        c.optimizer.options.population = 7;
        c.training.validation_fraction = 1.5;
        const auto v = c.violations("pipeline");
        auto has = [&](const std::string& key) {
            return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.rfind(key, 0) == 0; });
        };
        CHECK(has("mesh"));
        CHECK(has("hand"));
        CHECK(has("schedule"));
        CHECK(has("material"));
        CHECK(has("slicer.resolution"));
        CHECK(has("optimizer.population"));
        CHECK(has("training.validation_fraction"));
        CHECK_FALSE(has("model"));
        CHECK_THROWS_AS(c.validate("pipeline"), ConfigError);
        CHECK(has("mesh"));
        const auto measure_only = c.violations("measure");
        CHECK(std::none_of(measure_only.begin(), measure_only.end(),
                           [](const std::string& s) { return s.rfind("hand", 0) == 0; }));
    }

    TEST_CASE("config files resolve paths and accept overrides")
    {
        const auto dir = testing::scratch("pipeline_config");
        io::write_text(dir / "cube.stl", testing::cube_ascii_stl);
        io::write_text(dir / "run.json", R"({"mesh": "cube.stl", "output": "out", "slicer": {"thickness": 0.5}})");
        const auto c = RunConfig::load(dir / "run.json", {{"slicer", {{"resolution", 16}}}, {"seed", 9}});
        CHECK(c.mesh == (dir / "cube.stl").lexically_normal());
        CHECK(c.output == (dir / "out").lexically_normal());
        CHECK(c.slicer.thickness == 0.5);
        CHECK(c.slicer.resolution == 16);
        CHECK(c.seed == 9);
        CHECK(c.violations("measure").empty());
        CHECK_THROWS_AS(RunConfig::load(dir / "missing.json"), Error);
        io::write_text(dir / "broken.json", "{\"mesh\": ");
        CHECK_THROWS_AS(RunConfig::load(dir / "broken.json"), Error);
    }

    TEST_CASE("stage artifacts are reproducible and listed in the manifest")
    {
        const auto dir = testing::scratch("pipeline_stages");
        io::write_text(dir / "cube.stl", testing::cube_ascii_stl);
        auto run = [&](const std::string& out) {
            RunConfig c;
            c.mesh = dir / "cube.stl";
            c.output = dir / out;
            c.slicer.thickness = 0.25;
            c.slicer.resolution = 16;
            c.grasp_space.monte_carlo_samples = 2000;
            Pipeline p(c, "test");
            for (const char* stage : {"measure", "fgs", "slice", "energy"}) {
                p.run(stage);
            }
            return p.finish();
        };
        const auto m1 = run("a");
        const auto m2 = run("b");
        CHECK(m1["status"] == "ok");
        CHECK(m1["config_hash"] == m2["config_hash"]);
        auto s1 = snapshot(dir / "a"), s2 = snapshot(dir / "b");
        REQUIRE(s1.size() == s2.size());
        for (std::size_t i = 0; i < s1.size(); ++i) {
            CHECK(s1[i].first == s2[i].first);
            if (s1[i].first != "manifest.json") {
                CHECK_MESSAGE(s1[i].second == s2[i].second, s1[i].first);
            }
        }
        std::vector<std::string> listed;
        for (const auto& o : m1["outputs"]) {
            listed.push_back(o["path"].get<std::string>());
            CHECK(o["sha256"] == sha256_hex(io::read_text(dir / "a" / o["path"].get<std::string>())));
        }
        for (const auto& [rel, body] : s1) {
            if (rel != "manifest.json") {
                CHECK_MESSAGE(std::find(listed.begin(), listed.end(), rel) != listed.end(), rel);
            }
        }
        CHECK(fs::exists(dir / "a" / "slice" / "layer_003.json"));
        CHECK(fs::exists(dir / "a" / "slice" / "masks" / "layer_003.pgm"));
        const auto measure = json::parse(io::read_text(dir / "a" / "measure.json"));
        CHECK(measure["surface_area"].get<double>() == doctest::Approx(6.0));
        CHECK(m1["timings"].contains("slice"));
        CHECK(m1["inputs"][0]["sha256"] == sha256_hex(testing::cube_ascii_stl));
    }

    TEST_CASE("failed stage is recorded in the manifest")
    {
        const auto dir = testing::scratch("pipeline_fail");
        io::write_text(dir / "broken.stl", "solid broken\nfacet normal 0 0 1\n outer loop\n  vertex 0 0\n");
        RunConfig c;
        c.mesh = dir / "broken.stl";
        c.output = dir / "out";
        Pipeline p(c, "measure");
        CHECK_THROWS_AS(p.measure(), Error);
        const auto m = p.finish("mesh unreadable");
        CHECK(m["status"] == "error");
        CHECK(m["error"]["stage"] == "measure");
        CHECK(fs::exists(dir / "out" / "manifest.json"));
    }

    TEST_CASE("candidate evaluation: rest pose, zero gradient and thickness")
    {
        const auto& s = scene();
        const PipelineProblem problem(s.hand.mesh, s.hand.model, s.space, {}, {}, {}, 16);
        CHECK(problem.dimension() == s.hand.model.joint_count() + 4);
        CHECK(problem.variable_names().back() == "d");
        CHECK_FALSE(problem.uses_network());

        Eigen::VectorXd x(problem.dimension());
        x << s.hand.model.rest_joints(), 483.15, 0.0, 40.0, 0.2;
        const auto rest = problem.report(x);
        REQUIRE(rest.eval.feasible());
        CHECK(rest.eval.objectives.size() == 3);
        CHECK(std::abs(rest.eval.objectives[1]) <= 1e-12);
        CHECK(rest.eval.objectives[2] == 0.0);
        CHECK(problem.grasp_violation(s.hand.model.rest_joints()) == 0.0);

        double previous = std::numeric_limits<double>::infinity();
        for (double d : {0.1, 0.2, 0.3, 0.4}) {
            x[x.size() - 1] = d;
            const auto r = problem.report(x);
            REQUIRE(r.eval.feasible());
            CHECK(r.eval.objectives[0] < previous);
            previous = r.eval.objectives[0];
        }

        x[x.size() - 3] = 5.0;
        x[x.size() - 1] = 0.2;
        CHECK(problem.report(x).eval.objectives[2] == doctest::Approx(0.01 * 5.0 * 0.2));
    }

    TEST_CASE("candidate evaluation: infeasible inputs carry reasons")
    {
        const auto& s = scene();
        const PipelineProblem problem(s.hand.mesh, s.hand.model, s.space, {}, {}, {}, 16);
        Eigen::VectorXd x(problem.dimension());
        x << s.hand.model.rest_joints(), 483.15, 1.0, 40.0, 0.2;
        x[x.size() - 2] = 500.0;
        const auto out_of_box = problem.report(x);
        CHECK_FALSE(out_of_box.eval.feasible());
        CHECK(out_of_box.eval.reason.find("bounds") != std::string::npos);

        x[x.size() - 2] = 40.0;
        x.head(s.hand.model.joint_count()).setConstant(1.4);
        CHECK_FALSE(problem.report(x).eval.feasible());
        CHECK(problem.grasp_violation(x.head(s.hand.model.joint_count())) > 0.0);
    }
}
