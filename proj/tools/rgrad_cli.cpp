#include "rgrad/config.hpp"
#include "rgrad/diagnostics.hpp"
#include "rgrad/errors.hpp"
#include "rgrad/gradcheck.hpp"
#include "rgrad/harness.hpp"
#include "rgrad/image.hpp"
#include "rgrad/renderer.hpp"
#include "rgrad/scene.hpp"
#include "rgrad/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace rgrad;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

struct ConfigArgs {
    std::string path;
    std::vector<std::string> overrides;

    void add_to(CLI::App* cmd)
    {
        cmd->add_option("--config", path, "Config file (key = value lines)")->check(CLI::ExistingFile);
        cmd->add_option("--set", overrides, "Override a config key: key=value (repeatable)");
    }

    Config load() const
    {
        Config cfg = path.empty() ? Config{} : Config::load(path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return cfg;
    }
};

std::string num(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Writes through `fn` to `path`, or to stdout when the path is empty.
template <class Fn>
void emit(const std::string& path, Fn&& fn)
{
    if (path.empty()) {
        fn(std::cout);
        std::cout.flush();
        return;
    }
    if (const auto parent = fs::path(path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path + " for writing");
    fn(out);
    if (!out)
        throw std::runtime_error("write failed for " + path);
}

ScenarioSpec load_scenario(const Config& cfg)
{
    cfg.require_known(scenario_config_keys(), train_config_prefixes());
    return scenario_from(cfg);
}

std::vector<double> parse_radii(const std::string& text)
{
    Config c;
    c.set("radii", text);
    std::vector<double> out;
    for (const auto& item : c.get_list("radii")) {
        Config one;
        one.set("r", item);
        out.push_back(one.get_double("r", 0.0));
    }
    return out;
}

std::vector<PerBlock<double>> read_run_dots(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read run CSV " + path);
    std::string line;
    std::getline(in, line);
    if (line.rfind("iter,view_a,view_b,loss_a,loss_b,dot_pos", 0) != 0)
        throw std::runtime_error("run CSV " + path + ": unexpected header");
    std::vector<PerBlock<double>> dots;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            f.push_back(cell);
        if (f.size() != 12)
            throw std::runtime_error("run CSV " + path + ": bad row");
        if (std::stoi(f[2]) < 0)
            continue;
        PerBlock<double> d{};
        for (std::size_t b = 0; b < kNumBlocks; ++b)
            d[b] = std::stod(f[5 + b]);
        dots.push_back(d);
    }
    return dots;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Regime-aware gradient toolkit for 2D Gaussian splat scenes"};
    app.require_subcommand(1);

    // gen-scene
    auto* gen_scene = app.add_subcommand("gen-scene", "Write a random splat scene");
    ConfigArgs gs_cfg;
    gs_cfg.add_to(gen_scene);
    std::uint64_t gs_seed = 1;
    int gs_n = 16;
    double gs_extent = 1.0, gs_sigma = 0.0;
    std::string gs_out;
    gen_scene->add_option("--seed", gs_seed, "Scene seed");
    gen_scene->add_option("--n", gs_n, "Number of splats")->check(CLI::PositiveNumber);
    gen_scene->add_option("--extent", gs_extent, "Half-width of the position box");
    gen_scene->add_option("--perturb", gs_sigma, "Perturbation sigma applied after generation");
    gen_scene->add_option("--out", gs_out, "Output scene file (stdout when omitted)");

    // gen-cams
    auto* gen_cams = app.add_subcommand("gen-cams", "Write a bimodal camera layout as CSV");
    ConfigArgs gc_cfg;
    gc_cfg.add_to(gen_cams);
    std::uint64_t gc_seed = 0;
    std::string gc_out;
    gen_cams->add_option("--seed", gc_seed, "Camera seed (overrides cams.seed)");
    gen_cams->add_option("--out", gc_out, "Output CSV (stdout when omitted)");

    // render
    auto* render_cmd = app.add_subcommand("render", "Render a scene from every camera of a camera CSV");
    std::string rd_scene, rd_cams, rd_dir, rd_format = "ppm";
    render_cmd->add_option("--scene", rd_scene, "Scene file")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--cams", rd_cams, "Camera CSV")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--out-dir", rd_dir, "Output directory")->required();
    render_cmd->add_option("--format", rd_format, "ppm or imgf32")->check(CLI::IsMember({"ppm", "imgf32"}));

    // grad-check
    auto* grad_cmd = app.add_subcommand("grad-check", "Analytic vs finite-difference gradients");
    ConfigArgs gk_cfg;
    gk_cfg.add_to(grad_cmd);
    std::uint64_t gk_seed = 0;
    int gk_n = 20;
    std::string gk_out;
    grad_cmd->add_option("--seed", gk_seed, "Base seed");
    grad_cmd->add_option("--n", gk_n, "Number of scene/camera draws")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--out", gk_out, "Output CSV (stdout when omitted)");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train one run on the configured scenario geometry");
    ConfigArgs tr_cfg;
    tr_cfg.add_to(train_cmd);
    std::string tr_sampler, tr_reconciler, tr_dir;
    int tr_iters = 0;
    std::uint64_t tr_seed = 0;
    bool tr_seed_set = false;
    train_cmd->add_option("--sampler", tr_sampler, "single|r2view|balanced|active");
    train_cmd->add_option("--reconciler", tr_reconciler, "sum|project|precond|normeq|minnorm|cagrad|confgate");
    train_cmd->add_option("--iterations", tr_iters, "Iterations")->check(CLI::PositiveNumber);
    auto* tr_seed_opt = train_cmd->add_option("--seed", tr_seed, "Run seed (init perturbation and sampler)");
    train_cmd->add_option("--out-dir", tr_dir, "Output directory")->required();

    // diagnose
    auto* diag_cmd = app.add_subcommand("diagnose", "Gradient ratio, distance exponent and conflict per block");
    ConfigArgs dg_cfg;
    dg_cfg.add_to(diag_cmd);
    std::uint64_t dg_seed = 1;
    std::string dg_radii = "2,3,4,6,8", dg_run, dg_out, dg_report;
    int dg_iters = 0;
    diag_cmd->add_option("--seed", dg_seed, "Init perturbation seed of the frozen scene");
    diag_cmd->add_option("--radii", dg_radii, "Comma-separated sweep distances");
    diag_cmd->add_option("--run", dg_run, "Run CSV to take dot products from (otherwise a balanced run is trained)")
        ->check(CLI::ExistingFile);
    diag_cmd->add_option("--conflict-iterations", dg_iters, "Iterations of the balanced conflict run");
    diag_cmd->add_option("--out", dg_out, "Output CSV (stdout when omitted)");
    diag_cmd->add_option("--report", dg_report, "Variance report JSON (stdout when omitted)");

    // variance-sim
    auto* var_cmd = app.add_subcommand("variance-sim", "Variance decomposition on a synthetic population");
    std::string vs_preset = "scalar-toy";
    std::size_t vs_draws = 100000;
    std::uint64_t vs_seed = 0;
    double vs_shift = 2.0;
    var_cmd->add_option("--preset", vs_preset, "scalar-toy or planted")->check(CLI::IsMember({"scalar-toy", "planted"}));
    var_cmd->add_option("--draws", vs_draws, "Monte Carlo draws (planted preset)");
    var_cmd->add_option("--seed", vs_seed, "Seed (planted preset)");
    var_cmd->add_option("--shift", vs_shift, "Planted mean separation per coordinate");

    // scenario
    auto* sc_cmd = app.add_subcommand("scenario", "Multi-seed comparison of training arms");
    ConfigArgs sc_cfg;
    sc_cfg.add_to(sc_cmd);
    std::string sc_dir;
    unsigned sc_threads = 0;
    sc_cmd->add_option("--out-dir", sc_dir, "Output directory")->required();
    sc_cmd->add_option("--threads", sc_threads, "Worker threads (default: REGIME_GRAD_THREADS or core count)");

    if (argc <= 1) {
        std::cerr << app.help();
        return kUsageError;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }
    tr_seed_set = tr_seed_opt->count() > 0;

    try {
        if (*gen_scene) {
            gs_cfg.load().require_known({});
            SplatScene s = make_synthetic_scene(gs_seed, static_cast<std::size_t>(gs_n), gs_extent);
            if (gs_sigma > 0.0)
                s = perturb_scene(s, gs_seed, gs_sigma);
            emit(gs_out, [&](std::ostream& out) { write_scene(out, s); });
        } else if (*gen_cams) {
            Config cfg = gc_cfg.load();
            if (gen_cams->count("--seed"))
                cfg.set("cams.seed", std::to_string(gc_seed));
            const ScenarioSpec spec = load_scenario(cfg);
            const ScenarioCameras cams = scenario_cameras(spec);
            emit(gc_out, [&](std::ostream& out) { write_cameras_csv(out, cams); });
            std::cerr << "bimodality " << num(distance_stats(std::span<const CameraSpec>(cams.train)).bimodality)
                      << '\n';
        } else if (*render_cmd) {
            const SplatScene s = load_scene(rd_scene);
            std::ifstream in(rd_cams);
            ScenarioCameras cams = read_cameras_csv(in);
            fs::create_directories(rd_dir);
            std::vector<CameraSpec> all = cams.train;
            all.insert(all.end(), cams.test.begin(), cams.test.end());
            for (const auto& cam : all) {
                const fs::path p = fs::path(rd_dir) / ("view_" + std::to_string(cam.id) + "." + rd_format);
                save_image(p, render(s, cam));
            }
        } else if (*grad_cmd) {
            const Config cfg = gk_cfg.load();
            cfg.require_known({"loss.lambda_ssim", "loss.ssim_window", "loss.ssim_sigma", "splats", "extent"});
            GradCheckOptions opts;
            opts.seed = gk_seed;
            opts.draws = gk_n;
            opts.n_splats = static_cast<std::size_t>(cfg.get_int("splats", static_cast<int>(opts.n_splats)));
            opts.extent = cfg.get_double("extent", opts.extent);
            opts.loss.lambda_ssim = cfg.get_double("loss.lambda_ssim", opts.loss.lambda_ssim);
            opts.loss.ssim_window = cfg.get_int("loss.ssim_window", opts.loss.ssim_window);
            opts.loss.ssim_sigma = cfg.get_double("loss.ssim_sigma", opts.loss.ssim_sigma);
            const GradCheckReport rep = grad_check(opts);
            emit(gk_out, [&](std::ostream& out) { write_grad_check_csv(out, rep); });
            if (!rep.pass()) {
                std::cerr << "grad-check: tolerance exceeded\n";
                return kRuntimeError;
            }
        } else if (*train_cmd) {
            Config cfg = tr_cfg.load();
            if (!tr_sampler.empty())
                cfg.set("sampler", tr_sampler);
            if (!tr_reconciler.empty())
                cfg.set("reconciler", tr_reconciler);
            if (tr_iters > 0)
                cfg.set("iterations", std::to_string(tr_iters));
            if (tr_seed_set)
                cfg.set("seed", std::to_string(tr_seed));
            const ScenarioSpec spec = load_scenario(cfg);
            TrainConfig tc = spec.base;
            for (int it = tc.eval_every; it <= tc.iterations; it += tc.eval_every)
                tc.checkpoints.push_back(it);
            tc.checkpoints.push_back(tc.iterations);
            const ScenarioCameras cams = scenario_cameras(spec);
            const SplatScene target = scenario_target(spec);
            Trainer trainer(scenario_init(spec, tc.seed), target, cams.train, cams.test, tc);
            trainer.run();
            const fs::path dir(tr_dir);
            fs::create_directories(dir);
            emit((dir / "run.csv").string(), [&](std::ostream& out) { write_run_csv(out, trainer.record()); });
            emit((dir / "eval.csv").string(), [&](std::ostream& out) { write_eval_csv(out, trainer.record()); });
            for (const auto& [it, s] : trainer.checkpoints())
                save_scene(dir / ("checkpoint_" + std::to_string(it) + ".scene"), s);
            save_scene(dir / "final.scene", trainer.scene());
        } else if (*diag_cmd) {
            const Config cfg = dg_cfg.load();
            const ScenarioSpec spec = load_scenario(cfg);
            const ScenarioCameras cams = scenario_cameras(spec);
            const SplatScene target = scenario_target(spec);
            const SplatScene frozen = scenario_init(spec, dg_seed);
            const LossConfig& loss = spec.base.loss;

            const RegimePartition part = median_split(cams.train);
            const TargetSet targets = render_targets(target, cams.train);
            const RegimeGradientPopulation pop = gradient_population(frozen, cams.train, targets, part, loss);
            const VarianceReport vr = variance_decompose(pop);
            const PerBlock<double> ratio = gradient_ratio(pop);
            const std::vector<double> radii = parse_radii(dg_radii);
            const PerBlock<double> d_hat = sweep_exponents(frozen, target, cams.train, radii, loss);

            std::vector<PerBlock<double>> dots;
            if (!dg_run.empty()) {
                dots = read_run_dots(dg_run);
            } else {
                TrainConfig tc = spec.base;
                tc.sampler.kind = SamplerKind::Balanced;
                tc.seed = dg_seed;
                if (dg_iters > 0)
                    tc.iterations = dg_iters;
                Trainer trainer(frozen, target, cams.train, cams.test, tc);
                trainer.run();
                dots = trainer.record().pair_dots();
            }
            const ConflictReport cr = conflict_rate(dots);

            emit(dg_out, [&](std::ostream& out) {
                out << "block,R,d_hat,conflict_rate\n";
                for (BlockKind b : kAllBlocks) {
                    const auto i = index_of(b);
                    out << block_name(b) << ',' << num(ratio[i]) << ',' << num(d_hat[i]) << ','
                        << num(cr.block_rates[i]) << '\n';
                }
            });
            nlohmann::ordered_json j;
            j["point"] = "init seed " + std::to_string(dg_seed);
            j["sigma2_w"] = vr.sigma2_w;
            j["sigma2_b"] = vr.sigma2_b;
            j["ratio_b_over_w"] = vr.sigma2_w > 0.0 ? nlohmann::ordered_json(vr.sigma2_b / vr.sigma2_w) : nullptr;
            j["ratio_predicted"] = vr.ratio_predicted ? nlohmann::ordered_json(*vr.ratio_predicted) : nullptr;
            j["ratio_measured"] = vr.ratio_measured ? nlohmann::ordered_json(*vr.ratio_measured) : nullptr;
            j["single_view_variance"] = vr.single_view_variance;
            j["var_random"] = vr.var_random;
            j["var_structured"] = vr.var_structured;
            j["conflict_rate"] = cr.conflict_rate;
            j["conflict_iterations"] = cr.iterations;
            j["bimodality"] = distance_stats(std::span<const CameraSpec>(cams.train)).bimodality;
            emit(dg_report, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
        } else if (*var_cmd) {
            if (vs_preset == "scalar-toy") {
                const VarianceReport vr = variance_decompose(scalar_toy_population());
                std::cout << "sigma2_w=" << num(vr.sigma2_w) << '\n'
                          << "sigma2_b=" << num(vr.sigma2_b) << '\n'
                          << "ratio=" << num(*vr.ratio_predicted) << '\n'
                          << "var_random=" << num(vr.var_random) << '\n'
                          << "var_structured=" << num(vr.var_structured) << '\n'
                          << "ratio_measured=" << num(*vr.ratio_measured) << '\n';
            } else {
                const auto pop = planted_population(vs_seed, 8, 4, vs_shift);
                const RatioCheck rc = check_ratio_identity(pop, MonteCarlo{vs_draws, vs_seed}, 0.05);
                std::cout << "sigma2_w=" << num(rc.report.sigma2_w) << '\n'
                          << "sigma2_b=" << num(rc.report.sigma2_b) << '\n'
                          << "ratio=" << num(rc.predicted) << '\n'
                          << "ratio_monte_carlo=" << num(rc.measured) << '\n'
                          << "relative_error=" << num(rc.relative_error) << '\n'
                          << "pass=" << (rc.pass ? 1 : 0) << '\n';
            }
        } else if (*sc_cmd) {
            const ScenarioSpec spec = load_scenario(sc_cfg.load());
            const fs::path dir(sc_dir);
            ScenarioOptions opts;
            opts.threads = sc_threads;
            opts.run_dir = dir / "runs";
            const ComparisonReport rep = run_scenario(spec, opts);
            emit((dir / "runs.csv").string(), [&](std::ostream& out) { write_runs_csv(out, rep); });
            emit((dir / "arms.csv").string(), [&](std::ostream& out) { write_arms_csv(out, rep); });
            emit((dir / "deltas.csv").string(), [&](std::ostream& out) { write_deltas_csv(out, rep); });
            if (rep.partial) {
                std::cerr << "scenario: PARTIAL REPORT: " << rep.error << '\n';
                return kRuntimeError;
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return 0;
}
