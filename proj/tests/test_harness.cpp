#include "rgrad/errors.hpp"
#include "rgrad/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <thread>

using namespace rgrad;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("rgrad_tests_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct CliResult {
    int code = -1;
    std::string out;
};

CliResult run_cli(const std::string& args, const fs::path& dir)
{
    const fs::path out = dir / "stdout.txt";
    const std::string cmd = std::string("\"") + RGRAD_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    return r;
}

std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep))
        out.push_back(cur);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

ScenarioSpec tiny_scenario()
{
    ScenarioSpec spec = hybrid16();
    spec.n_splats = 6;
    spec.train_layout.n_near = 3;
    spec.train_layout.n_far = 3;
    spec.n_test_near = 2;
    spec.n_test_far = 2;
    spec.arms = {parse_arm("single@24"), parse_arm("r2view@12"), parse_arm("balanced+project@12")};
    spec.seeds = {1, 2};
    spec.base.eval_every = 6;
    return spec;
}

} // namespace

TEST_SUITE("harness")
{
    TEST_CASE("bimodal camera layout")
    {
        CameraLayout layout;
        layout.r_near_max = 1.2;
        const auto cams = gen_bimodal_cameras(layout, 4);
        REQUIRE(cams.size() == 16);
        for (std::size_t i = 0; i < cams.size(); ++i) {
            CHECK(cams[i].id == static_cast<int>(i));
            if (i < 8) {
                CHECK(cams[i].r >= 1.0);
                CHECK(cams[i].r <= 1.2);
                CHECK(std::abs(cams[i].offset[0]) <= layout.near_offset);
            } else {
                CHECK(cams[i].r >= 5.0);
                CHECK(cams[i].r <= 6.0);
                CHECK(std::abs(cams[i].offset[1]) <= layout.far_offset);
            }
        }
        CHECK(distance_stats(cams).bimodality > 0.8);

        const RegimePartition part = median_split(cams);
        for (const auto& c : cams)
            CHECK(part.is_near(c.id) == (c.id < 8));

        CHECK(gen_bimodal_cameras(layout, 4) == cams);
        CHECK(gen_bimodal_cameras(layout, 5) != cams);
        CHECK(gen_bimodal_cameras(layout, 4, 50).front().id == 50);

        CameraLayout overlap = layout;
        overlap.r_far_min = 1.1;
        CHECK_THROWS_AS(gen_bimodal_cameras(overlap, 4), std::invalid_argument);
        overlap.bimodal = false;
        CHECK_NOTHROW(gen_bimodal_cameras(overlap, 4));
        CameraLayout few = layout;
        few.n_far = 1;
        CHECK_THROWS_AS(gen_bimodal_cameras(few, 4), std::invalid_argument);
    }

    TEST_CASE("arm notation")
    {
        const ArmSpec a = parse_arm("balanced+cagrad@1500");
        CHECK(a.sampler == SamplerKind::Balanced);
        CHECK(a.op == Operator::CAGrad);
        CHECK(a.iterations == 1500);
        CHECK(arm_label(a) == "balanced+cagrad@1500");
        const ArmSpec s = parse_arm("r2view@2000");
        CHECK(s.op == Operator::Sum);
        CHECK(arm_label(s) == "r2view@2000");
        for (const char* bad : {"single", "single@", "single@-3", "single@12x", "triple@10", "balanced+magic@10", "@10"})
            CHECK_THROWS_AS(parse_arm(bad), std::invalid_argument);
    }

    TEST_CASE("scenario configuration")
    {
        const ScenarioSpec h = hybrid16();
        CHECK(h.arms.size() == 4);
        CHECK(h.seeds == std::vector<std::uint64_t>{1, 2, 3});
        CHECK(h.n_splats == 16);
        const ScenarioCameras cams = scenario_cameras(h);
        CHECK(cams.train.size() == 16);
        CHECK(cams.test.size() == 8);
        CHECK(cams.test.front().id == 1000);

        const Config c = Config::parse_string("scenario.arms = single@100, r2view@50\n"
                                              "scenario.seeds = 4,5\n"
                                              "scene.n_splats = 5\n"
                                              "cams.n_near = 3\n"
                                              "iterations = 77\n"
                                              "lr.pos = 0.004\n");
        const ScenarioSpec s = scenario_from(c);
        REQUIRE(s.arms.size() == 2);
        CHECK(s.arms[1].sampler == SamplerKind::RandomPair);
        CHECK(s.seeds == std::vector<std::uint64_t>{4, 5});
        CHECK(s.n_splats == 5);
        CHECK(s.train_layout.n_near == 3);
        CHECK(s.base.lr[0] == 0.004);
        CHECK_THROWS_AS(scenario_from(Config::parse_string("scenario.arms = \n")), ConfigError);
        CHECK_THROWS_AS(Config::parse_string("scene.colour = 1\n").require_known(scenario_config_keys(),
                                                                                 train_config_prefixes()),
                        ConfigError);

        ScenarioSpec empty = h;
        empty.arms.clear();
        CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
        CHECK_THROWS_AS(run_scenario(empty), std::invalid_argument);
    }

    TEST_CASE("camera CSV round trip")
    {
        const ScenarioCameras cams = scenario_cameras(tiny_scenario());
        std::stringstream csv;
        write_cameras_csv(csv, cams);
        CHECK(csv.str().rfind("id,r,offset_x,offset_y,f,width,height,regime,split\n", 0) == 0);
        const ScenarioCameras back = read_cameras_csv(csv);
        CHECK(back.train == cams.train);
        CHECK(back.test == cams.test);

        std::istringstream bad_header("id,r\n0,1\n");
        CHECK_THROWS_AS(read_cameras_csv(bad_header), std::invalid_argument);
        std::istringstream bad_row("id,r,offset_x,offset_y,f,width,height,regime,split\n0,abc,0,0,32,32,32,near,train\n");
        CHECK_THROWS_AS(read_cameras_csv(bad_row), std::invalid_argument);
    }

    TEST_CASE("summaries and deltas")
    {
        std::vector<RunSummary> runs(6);
        const double psnr[] = {20.0, 22.0, 24.0, 21.0, 25.0, 30.0};
        const char* arms[] = {"a", "a", "a", "b", "b", "c"};
        for (int i = 0; i < 6; ++i) {
            runs[static_cast<std::size_t>(i)].arm = arms[i];
            runs[static_cast<std::size_t>(i)].final_metrics.psnr_all = psnr[i];
            runs[static_cast<std::size_t>(i)].sigma2_w_mid = 2.0;
            runs[static_cast<std::size_t>(i)].sigma2_b_mid = 1.0;
        }
        const auto sums = summarize_runs(runs);
        REQUIRE(sums.size() == 3);
        CHECK(sums[0].arm == "a");
        CHECK(sums[0].n == 3);
        CHECK(sums[0].mean_psnr == 22.0);
        CHECK(*sums[0].std_psnr == doctest::Approx(2.0));
        CHECK(sums[0].mean_ratio_mid == 0.5);
        CHECK(*sums[1].std_psnr == doctest::Approx(std::sqrt(8.0)));
        CHECK_FALSE(sums[2].std_psnr.has_value());

        const auto deltas = pairwise_deltas(sums);
        REQUIRE(deltas.size() == 3);
        CHECK(deltas[0].arm_a == "a");
        CHECK(deltas[0].arm_b == "b");
        CHECK(deltas[0].delta_psnr == 1.0);
        CHECK(*deltas[0].band == doctest::Approx(std::sqrt(8.0)));
        CHECK(*deltas[0].within_band);
        CHECK(deltas[2].arm_a == "b");
        CHECK_FALSE(deltas[2].band.has_value());
        CHECK_FALSE(deltas[2].within_band.has_value());
    }

    TEST_CASE("worker count honours the environment cap")
    {
        ::setenv("REGIME_GRAD_THREADS", "2", 1);
        const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        CHECK(worker_count(0) == std::min(hw, 2u));
        CHECK(worker_count(8) == 2);
        CHECK(worker_count(1) == 1);
        ::setenv("REGIME_GRAD_THREADS", "zero", 1);
        CHECK(worker_count(3) == 3);
        ::unsetenv("REGIME_GRAD_THREADS");
        CHECK(worker_count(0) >= 1);
    }

    TEST_CASE("scenario runs every arm and seed and reduces to its rows")
    {
        const ScenarioSpec spec = tiny_scenario();
        const fs::path dir = scratch_dir("scenario");
        ScenarioOptions opts;
        opts.threads = 2;
        opts.run_dir = dir;
        const ComparisonReport rep = run_scenario(spec, opts);
        CHECK_FALSE(rep.partial);
        REQUIRE(rep.runs.size() == 6);
        REQUIRE(rep.arms.size() == 3);
        CHECK(rep.deltas.size() == 3);
        CHECK(*rep.bimodality > 0.0);
        CHECK(fs::exists(dir / "single_24_seed1_run.csv"));
        CHECK(fs::exists(dir / "balanced_project_12_seed2_eval.csv"));
        for (const auto& r : rep.runs) {
            CHECK(r.sigma2_w_init > 0.0);
            CHECK(r.sigma2_w_mid > 0.0);
        }
        const auto* single = rep.find_arm("single@24");
        REQUIRE(single != nullptr);
        CHECK(single->n == 2);
        CHECK(single->mean_conflict_rate == 0.0);
        CHECK(rep.find_arm("nope") == nullptr);

        const ComparisonReport serial = run_scenario(spec, ScenarioOptions{1, std::nullopt});
        std::ostringstream a, b;
        write_runs_csv(a, rep);
        write_runs_csv(b, serial);
        CHECK(a.str() == b.str());

        // Rebuild the per-arm summary from the runs CSV alone.
        std::istringstream in(a.str());
        std::string line;
        std::getline(in, line);
        CHECK(line == "arm,seed,iterations,psnr_all,ssim_all,psnr_near,ssim_near,psnr_far,ssim_far,conflict_rate,"
                      "sigma2_w_init,sigma2_b_init,sigma2_w_mid,sigma2_b_mid");
        std::vector<RunSummary> parsed;
        while (std::getline(in, line)) {
            const auto f = split(line, ',');
            REQUIRE(f.size() == 14);
            RunSummary r;
            r.arm = f[0];
            r.seed = std::stoull(f[1]);
            r.iterations = std::stoi(f[2]);
            r.final_metrics.psnr_all = std::stod(f[3]);
            r.final_metrics.ssim_all = std::stod(f[4]);
            r.final_metrics.psnr_near = std::stod(f[5]);
            r.final_metrics.ssim_near = std::stod(f[6]);
            r.final_metrics.psnr_far = std::stod(f[7]);
            r.final_metrics.ssim_far = std::stod(f[8]);
            r.conflict_rate = std::stod(f[9]);
            r.sigma2_w_init = std::stod(f[10]);
            r.sigma2_b_init = std::stod(f[11]);
            r.sigma2_w_mid = std::stod(f[12]);
            r.sigma2_b_mid = std::stod(f[13]);
            parsed.push_back(r);
        }
        const auto recomputed = summarize_runs(parsed);
        REQUIRE(recomputed.size() == rep.arms.size());
        for (std::size_t i = 0; i < recomputed.size(); ++i) {
            CHECK(recomputed[i].arm == rep.arms[i].arm);
            CHECK(recomputed[i].mean_psnr == rep.arms[i].mean_psnr);
            CHECK(recomputed[i].std_psnr == rep.arms[i].std_psnr);
            CHECK(recomputed[i].mean_ssim == rep.arms[i].mean_ssim);
            CHECK(recomputed[i].mean_conflict_rate == rep.arms[i].mean_conflict_rate);
            CHECK(recomputed[i].mean_ratio_mid == rep.arms[i].mean_ratio_mid);
        }

        std::ostringstream arms_csv, deltas_csv;
        write_arms_csv(arms_csv, rep);
        write_deltas_csv(deltas_csv, rep);
        CHECK(arms_csv.str().rfind("arm,n,mean_psnr,std_psnr,mean_ssim,std_ssim,mean_psnr_near,mean_psnr_far,"
                                   "mean_conflict_rate,mean_ratio_mid\nsingle@24,2,",
                                   0) == 0);
        CHECK(deltas_csv.str().rfind("arm_a,arm_b,delta_psnr,band,within_band\nsingle@24,r2view@12,", 0) == 0);
    }

    TEST_CASE("a failing arm marks the report partial")
    {
        ScenarioSpec spec = tiny_scenario();
        spec.train_layout.r_near_min = spec.train_layout.r_near_max = 5.0;
        spec.train_layout.r_far_min = spec.train_layout.r_far_max = 5.0;
        spec.train_layout.bimodal = false;
        spec.arms = {parse_arm("balanced@6"), parse_arm("single@6")};
        spec.seeds = {1};
        const ComparisonReport rep = run_scenario(spec, ScenarioOptions{1, std::nullopt});
        CHECK(rep.partial);
        CHECK(rep.error.rfind("balanced@6 seed 1: ", 0) == 0);
        CHECK(rep.runs.empty());
        CHECK_FALSE(rep.bimodality.has_value());
    }

    TEST_CASE("frozen variance and sweep exponents")
    {
        const ScenarioSpec spec = tiny_scenario();
        const ScenarioCameras cams = scenario_cameras(spec);
        const SplatScene target = scenario_target(spec);
        const SplatScene init = scenario_init(spec, 3);
        CHECK(init != target);
        CHECK(scenario_init(spec, 3) == init);
        const VarianceReport rep = frozen_variance(init, target, cams.train, LossConfig{});
        CHECK(rep.sigma2_w > 0.0);
        CHECK(rep.equal_groups);
        const std::vector<double> radii = {2, 3, 4};
        const PerBlock<double> d = sweep_exponents(init, target, cams.train, radii, LossConfig{});
        for (double x : d)
            CHECK(std::isfinite(x));
    }

    TEST_CASE("command line")
    {
        const fs::path dir = scratch_dir("cli");
        CHECK(run_cli("", dir).code == 2);
        CHECK(run_cli("frobnicate", dir).code == 2);
        CHECK(run_cli("grad-check --bogus 1", dir).code == 2);
        CHECK(run_cli("train --out-dir x --set samplr=single", dir).code == 2);
        CHECK(run_cli("train --out-dir x --set sampler=triple", dir).code == 2);

        const CliResult toy = run_cli("variance-sim --preset scalar-toy", dir);
        CHECK(toy.code == 0);
        CHECK(toy.out.find("sigma2_w=1\n") != std::string::npos);
        CHECK(toy.out.find("sigma2_b=25\n") != std::string::npos);
        CHECK(toy.out.find("ratio=26\n") != std::string::npos);

        const fs::path grad_csv = dir / "grad.csv";
        const CliResult gc = run_cli("grad-check --seed 3 --n 2 --out \"" + grad_csv.string() + "\"", dir);
        CHECK(gc.code == 0);
        CHECK(slurp(grad_csv).rfind("block,max_rel_error,max_abs_error,checked,failures\n", 0) == 0);

        const fs::path scene = dir / "s.scene";
        const fs::path cams = dir / "cams.csv";
        CHECK(run_cli("gen-scene --seed 2 --n 4 --out \"" + scene.string() + "\"", dir).code == 0);
        CHECK(load_scene(scene.string()) == make_synthetic_scene(2, 4, 1.0));
        CHECK(run_cli("gen-cams --set cams.n_near=2 --set cams.n_far=2 --set cams.n_test_near=2 "
                      "--set cams.n_test_far=2 --out \"" +
                          cams.string() + "\"",
                      dir)
                  .code == 0);
        const fs::path imgs = dir / "imgs";
        CHECK(run_cli("render --scene \"" + scene.string() + "\" --cams \"" + cams.string() + "\" --out-dir \"" +
                          imgs.string() + "\"",
                      dir)
                  .code == 0);
        CHECK(fs::exists(imgs / "view_0.ppm"));

        std::ofstream(dir / "broken.scene") << "SPLATSCENE v1 N=3\n1 2 3\n";
        CHECK(run_cli("render --scene \"" + (dir / "broken.scene").string() + "\" --cams \"" + cams.string() +
                          "\" --out-dir \"" + imgs.string() + "\"",
                      dir)
                  .code == 1);
    }
}
