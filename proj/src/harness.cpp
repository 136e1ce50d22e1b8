#include "rgrad/harness.hpp"

#include "rgrad/errors.hpp"
#include "rgrad/grouping.hpp"
#include "rgrad/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace rgrad {

namespace {

std::string num(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

void CameraLayout::validate() const
{
    if (n_near < 2 || n_far < 2)
        throw std::invalid_argument("camera layout needs at least two cameras per group");
    if (!(r_near_min > 0.0) || r_near_max < r_near_min || r_far_max < r_far_min)
        throw std::invalid_argument("camera layout has an invalid distance range");
    if (bimodal && !(r_far_min > r_near_max))
        throw std::invalid_argument("bimodal layout needs the far range strictly above the near range");
    if (near_offset < 0.0 || far_offset < 0.0)
        throw std::invalid_argument("camera offsets must be >= 0");
}

std::vector<CameraSpec> gen_bimodal_cameras(const CameraLayout& layout, std::uint64_t seed, int first_id)
{
    layout.validate();
    CounterRng rng(seed, /*stream=*/6);
    std::vector<CameraSpec> cams;
    auto add = [&](std::size_t n, double lo, double hi, double off) {
        for (std::size_t i = 0; i < n; ++i) {
            CameraSpec c;
            c.r = rng.uniform(lo, hi);
            c.offset = {rng.uniform(-off, off), rng.uniform(-off, off)};
            c.f = layout.f;
            c.width = layout.width;
            c.height = layout.height;
            c.id = first_id + static_cast<int>(cams.size());
            c.validate();
            cams.push_back(c);
        }
    };
    add(layout.n_near, layout.r_near_min, layout.r_near_max, layout.near_offset);
    add(layout.n_far, layout.r_far_min, layout.r_far_max, layout.far_offset);
    return cams;
}

ArmSpec parse_arm(const std::string& text)
{
    const auto at = text.find('@');
    if (at == std::string::npos || at == 0 || at + 1 >= text.size())
        throw std::invalid_argument("arm '" + text + "': expected sampler[+reconciler]@iterations");
    ArmSpec arm;
    const std::string head = text.substr(0, at);
    const std::string iters = text.substr(at + 1);
    std::size_t used = 0;
    try {
        arm.iterations = std::stoi(iters, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != iters.size() || arm.iterations < 1)
        throw std::invalid_argument("arm '" + text + "': bad iteration count");
    const auto plus = head.find('+');
    arm.sampler = parse_sampler(head.substr(0, plus));
    arm.op = plus == std::string::npos ? Operator::Sum : parse_operator(head.substr(plus + 1));
    arm.name = text;
    return arm;
}

std::string arm_label(const ArmSpec& arm)
{
    std::string s = sampler_name(arm.sampler);
    if (arm.sampler != SamplerKind::Single && arm.op != Operator::Sum)
        s += "+" + operator_name(arm.op);
    return s + "@" + std::to_string(arm.iterations);
}

void ScenarioSpec::validate() const
{
    if (arms.empty())
        throw std::invalid_argument("scenario has no arms");
    if (seeds.empty())
        throw std::invalid_argument("scenario has no seeds");
    if (n_splats == 0 || !(extent > 0.0) || init_sigma < 0.0)
        throw std::invalid_argument("scenario scene settings are invalid");
    train_layout.validate();
}

ScenarioSpec hybrid16()
{
    ScenarioSpec s;
    for (const char* a : {"single@4000", "single@2000", "r2view@2000", "balanced+project@2000"})
        s.arms.push_back(parse_arm(a));
    s.base.eval_every = 500;
    return s;
}

const std::set<std::string>& scenario_config_keys()
{
    static const std::set<std::string> keys = [] {
        std::set<std::string> k{"scene.seed",        "scene.n_splats",     "scene.extent",    "scene.init_sigma",
                                "cams.seed",         "cams.n_near",        "cams.n_far",      "cams.n_test_near",
                                "cams.n_test_far",   "cams.r_near_min",    "cams.r_near_max", "cams.r_far_min",
                                "cams.r_far_max",    "cams.near_offset",   "cams.far_offset", "cams.bimodal",
                                "camera.f",          "camera.width",       "camera.height",   "scenario.name",
                                "scenario.arms",     "scenario.seeds"};
        k.insert(train_config_keys().begin(), train_config_keys().end());
        return k;
    }();
    return keys;
}

ScenarioSpec scenario_from(const Config& cfg, ScenarioSpec base)
{
    ScenarioSpec s = std::move(base);
    s.name = cfg.get_string("scenario.name", s.name);
    s.scene_seed = cfg.get_u64("scene.seed", s.scene_seed);
    s.n_splats = static_cast<std::size_t>(cfg.get_int("scene.n_splats", static_cast<int>(s.n_splats)));
    s.extent = cfg.get_double("scene.extent", s.extent);
    s.init_sigma = cfg.get_double("scene.init_sigma", s.init_sigma);

    CameraLayout& L = s.train_layout;
    s.camera_seed = cfg.get_u64("cams.seed", s.camera_seed);
    L.n_near = static_cast<std::size_t>(cfg.get_int("cams.n_near", static_cast<int>(L.n_near)));
    L.n_far = static_cast<std::size_t>(cfg.get_int("cams.n_far", static_cast<int>(L.n_far)));
    s.n_test_near = static_cast<std::size_t>(cfg.get_int("cams.n_test_near", static_cast<int>(s.n_test_near)));
    s.n_test_far = static_cast<std::size_t>(cfg.get_int("cams.n_test_far", static_cast<int>(s.n_test_far)));
    L.r_near_min = cfg.get_double("cams.r_near_min", L.r_near_min);
    L.r_near_max = cfg.get_double("cams.r_near_max", L.r_near_max);
    L.r_far_min = cfg.get_double("cams.r_far_min", L.r_far_min);
    L.r_far_max = cfg.get_double("cams.r_far_max", L.r_far_max);
    L.near_offset = cfg.get_double("cams.near_offset", L.near_offset);
    L.far_offset = cfg.get_double("cams.far_offset", L.far_offset);
    L.bimodal = cfg.get_int("cams.bimodal", L.bimodal ? 1 : 0) != 0;
    L.f = cfg.get_double("camera.f", L.f);
    L.width = cfg.get_int("camera.width", L.width);
    L.height = cfg.get_int("camera.height", L.height);

    try {
        if (cfg.has("scenario.arms")) {
            s.arms.clear();
            for (const auto& a : cfg.get_list("scenario.arms"))
                s.arms.push_back(parse_arm(a));
        }
        if (cfg.has("scenario.seeds")) {
            s.seeds.clear();
            Config one;
            for (const auto& v : cfg.get_list("scenario.seeds")) {
                one.set("seed", v);
                s.seeds.push_back(one.get_u64("seed", 0));
            }
        }
        s.base = train_config_from(cfg, s.base);
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return s;
}

ScenarioCameras scenario_cameras(const ScenarioSpec& spec)
{
    ScenarioCameras out;
    out.train = gen_bimodal_cameras(spec.train_layout, spec.camera_seed, 0);
    CameraLayout test = spec.train_layout;
    test.n_near = spec.n_test_near;
    test.n_far = spec.n_test_far;
    out.test = gen_bimodal_cameras(test, spec.camera_seed ^ 0x9e3779b97f4a7c15ULL, 1000);
    return out;
}

void write_cameras_csv(std::ostream& out, const ScenarioCameras& cams)
{
    out << "id,r,offset_x,offset_y,f,width,height,regime,split\n";
    auto rows = [&](const std::vector<CameraSpec>& list, const char* split) {
        if (list.empty())
            return;
        std::vector<double> r;
        for (const auto& c : list)
            r.push_back(c.r);
        std::sort(r.begin(), r.end());
        const double threshold = r[(r.size() - 1) / 2];
        for (const auto& c : list) {
            out << c.id << ',' << num(c.r) << ',' << num(c.offset[0]) << ',' << num(c.offset[1]) << ',' << num(c.f)
                << ',' << c.width << ',' << c.height << ',' << (c.r <= threshold ? "near" : "far") << ',' << split
                << '\n';
        }
    };
    rows(cams.train, "train");
    rows(cams.test, "test");
}

ScenarioCameras read_cameras_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line.rfind("id,r,offset_x,offset_y,f,width,height", 0) != 0)
        throw std::invalid_argument("camera CSV: unexpected header");
    ScenarioCameras out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            f.push_back(cell);
        if (f.size() < 7)
            throw std::invalid_argument("camera CSV line " + std::to_string(lineno) + ": too few fields");
        CameraSpec c;
        try {
            c.id = std::stoi(f[0]);
            c.r = std::stod(f[1]);
            c.offset = {std::stod(f[2]), std::stod(f[3])};
            c.f = std::stod(f[4]);
            c.width = std::stoi(f[5]);
            c.height = std::stoi(f[6]);
        } catch (const std::exception&) {
            throw std::invalid_argument("camera CSV line " + std::to_string(lineno) + ": bad number");
        }
        c.validate();
        if (f.size() >= 9 && f[8] == "test")
            out.test.push_back(c);
        else
            out.train.push_back(c);
    }
    return out;
}

SplatScene scenario_target(const ScenarioSpec& spec)
{
    return make_synthetic_scene(spec.scene_seed, spec.n_splats, spec.extent);
}

SplatScene scenario_init(const ScenarioSpec& spec, std::uint64_t run_seed)
{
    return perturb_scene(scenario_target(spec), run_seed, spec.init_sigma);
}

const ArmSummary* ComparisonReport::find_arm(const std::string& name) const
{
    for (const auto& a : arms) {
        if (a.arm == name)
            return &a;
    }
    return nullptr;
}

namespace {

struct MeanStd {
    double mean = 0.0;
    std::optional<double> std;
};

MeanStd mean_std(const std::vector<double>& xs)
{
    MeanStd out;
    if (xs.empty())
        return out;
    for (double x : xs)
        out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    if (xs.size() >= 2) {
        double ss = 0.0;
        for (double x : xs)
            ss += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return out;
}

double ratio_or_zero(double b, double w) { return w > 0.0 ? b / w : 0.0; }

std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : std::string(); }

std::string file_stem(const std::string& arm, std::uint64_t seed)
{
    std::string s = arm;
    for (char& c : s) {
        if (c == '+' || c == '@')
            c = '_';
    }
    return s + "_seed" + std::to_string(seed);
}

} // namespace

std::vector<ArmSummary> summarize_runs(const std::vector<RunSummary>& runs)
{
    std::vector<std::string> order;
    for (const auto& r : runs) {
        if (std::find(order.begin(), order.end(), r.arm) == order.end())
            order.push_back(r.arm);
    }
    std::vector<ArmSummary> out;
    for (const auto& name : order) {
        std::vector<double> psnr, ssim_v, near, far, conflict, ratio;
        for (const auto& r : runs) {
            if (r.arm != name)
                continue;
            psnr.push_back(r.final_metrics.psnr_all);
            ssim_v.push_back(r.final_metrics.ssim_all);
            near.push_back(r.final_metrics.psnr_near);
            far.push_back(r.final_metrics.psnr_far);
            conflict.push_back(r.conflict_rate);
            ratio.push_back(ratio_or_zero(r.sigma2_b_mid, r.sigma2_w_mid));
        }
        ArmSummary a;
        a.arm = name;
        a.n = psnr.size();
        const auto p = mean_std(psnr);
        const auto s = mean_std(ssim_v);
        a.mean_psnr = p.mean;
        a.std_psnr = p.std;
        a.mean_ssim = s.mean;
        a.std_ssim = s.std;
        a.mean_psnr_near = mean_std(near).mean;
        a.mean_psnr_far = mean_std(far).mean;
        a.mean_conflict_rate = mean_std(conflict).mean;
        a.mean_ratio_mid = mean_std(ratio).mean;
        out.push_back(a);
    }
    return out;
}

std::vector<DeltaRow> pairwise_deltas(const std::vector<ArmSummary>& arms)
{
    std::vector<DeltaRow> out;
    for (std::size_t i = 0; i < arms.size(); ++i) {
        for (std::size_t j = i + 1; j < arms.size(); ++j) {
            DeltaRow d;
            d.arm_a = arms[i].arm;
            d.arm_b = arms[j].arm;
            d.delta_psnr = arms[j].mean_psnr - arms[i].mean_psnr;
            if (arms[i].std_psnr && arms[j].std_psnr) {
                d.band = std::max(*arms[i].std_psnr, *arms[j].std_psnr);
                d.within_band = std::abs(d.delta_psnr) <= 2.0 * *d.band;
            }
            out.push_back(d);
        }
    }
    return out;
}

unsigned worker_count(unsigned requested)
{
    unsigned n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("REGIME_GRAD_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1)
            n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return n;
}

VarianceReport frozen_variance(const SplatScene& scene, const SplatScene& target_scene,
                               std::span<const CameraSpec> train_cams, const LossConfig& cfg)
{
    const RegimePartition part = median_split(train_cams);
    const TargetSet targets = render_targets(target_scene, train_cams);
    return variance_decompose(gradient_population(scene, train_cams, targets, part, cfg));
}

PerBlock<double> sweep_exponents(const SplatScene& scene, const SplatScene& target_scene,
                                 std::span<const CameraSpec> placements, std::span<const double> radii,
                                 const LossConfig& cfg)
{
    const auto sweep = distance_sweep(scene, target_scene, placements, radii, cfg);
    PerBlock<double> d{};
    for (std::size_t b = 0; b < kNumBlocks; ++b)
        d[b] = fit_distance_exponent(sweep[b]);
    return d;
}

ComparisonReport run_scenario(const ScenarioSpec& spec, const ScenarioOptions& opts)
{
    spec.validate();
    const ScenarioCameras cams = scenario_cameras(spec);
    const SplatScene target = scenario_target(spec);

    struct Job {
        ArmSpec arm;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& arm : spec.arms)
        for (std::uint64_t seed : spec.seeds)
            jobs.push_back({arm, seed});

    if (opts.run_dir)
        std::filesystem::create_directories(*opts.run_dir);

    std::vector<std::optional<RunSummary>> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex err_mu;
    std::string first_error;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size() || failed.load())
                return;
            const Job& job = jobs[i];
            try {
                TrainConfig cfg = spec.base;
                cfg.sampler.kind = job.arm.sampler;
                cfg.reconcile.op = job.arm.op;
                cfg.iterations = job.arm.iterations;
                cfg.seed = job.seed;
                const int mid = std::max(1, job.arm.iterations / 2);
                cfg.checkpoints.push_back(mid);

                const SplatScene init = scenario_init(spec, job.seed);
                Trainer trainer(init, target, cams.train, cams.test, cfg);
                trainer.run();

                RunSummary rs;
                rs.arm = job.arm.name;
                rs.seed = job.seed;
                rs.iterations = job.arm.iterations;
                rs.final_metrics = trainer.record().evals.back().metrics;
                rs.conflict_rate = trainer.record().online_conflict_rate();
                const VarianceReport v0 = frozen_variance(init, target, cams.train, cfg.loss);
                const VarianceReport v1 = frozen_variance(trainer.checkpoints().at(mid), target, cams.train, cfg.loss);
                rs.sigma2_w_init = v0.sigma2_w;
                rs.sigma2_b_init = v0.sigma2_b;
                rs.sigma2_w_mid = v1.sigma2_w;
                rs.sigma2_b_mid = v1.sigma2_b;

                if (opts.run_dir) {
                    const auto stem = *opts.run_dir / file_stem(job.arm.name, job.seed);
                    std::ofstream run_out(stem.string() + "_run.csv", std::ios::binary);
                    write_run_csv(run_out, trainer.record());
                    std::ofstream eval_out(stem.string() + "_eval.csv", std::ios::binary);
                    write_eval_csv(eval_out, trainer.record());
                    if (!run_out || !eval_out)
                        throw std::runtime_error("cannot write run files under " + opts.run_dir->string());
                }
                results[i] = std::move(rs);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (first_error.empty())
                    first_error = job.arm.name + " seed " + std::to_string(job.seed) + ": " + e.what();
                failed.store(true);
            }
        }
    };

    const unsigned n_workers = std::min<unsigned>(worker_count(opts.threads), static_cast<unsigned>(jobs.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_workers; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    ComparisonReport report;
    report.scenario = spec.name;
    for (auto& r : results) {
        if (r)
            report.runs.push_back(std::move(*r));
    }
    report.partial = failed.load();
    report.error = first_error;
    report.arms = summarize_runs(report.runs);
    report.deltas = pairwise_deltas(report.arms);
    try {
        report.bimodality = distance_stats(std::span<const CameraSpec>(cams.train)).bimodality;
    } catch (const UndefinedMomentsError&) {
    }
    return report;
}

void write_runs_csv(std::ostream& out, const ComparisonReport& report)
{
    out << "arm,seed,iterations,psnr_all,ssim_all,psnr_near,ssim_near,psnr_far,ssim_far,conflict_rate,"
           "sigma2_w_init,sigma2_b_init,sigma2_w_mid,sigma2_b_mid\n";
    for (const auto& r : report.runs) {
        const auto& m = r.final_metrics;
        out << r.arm << ',' << r.seed << ',' << r.iterations << ',' << num(m.psnr_all) << ',' << num(m.ssim_all)
            << ',' << num(m.psnr_near) << ',' << num(m.ssim_near) << ',' << num(m.psnr_far) << ','
            << num(m.ssim_far) << ',' << num(r.conflict_rate) << ',' << num(r.sigma2_w_init) << ','
            << num(r.sigma2_b_init) << ',' << num(r.sigma2_w_mid) << ',' << num(r.sigma2_b_mid) << '\n';
    }
}

void write_arms_csv(std::ostream& out, const ComparisonReport& report)
{
    out << "arm,n,mean_psnr,std_psnr,mean_ssim,std_ssim,mean_psnr_near,mean_psnr_far,mean_conflict_rate,"
           "mean_ratio_mid\n";
    for (const auto& a : report.arms) {
        out << a.arm << ',' << a.n << ',' << num(a.mean_psnr) << ',' << opt_num(a.std_psnr) << ','
            << num(a.mean_ssim) << ',' << opt_num(a.std_ssim) << ',' << num(a.mean_psnr_near) << ','
            << num(a.mean_psnr_far) << ',' << num(a.mean_conflict_rate) << ',' << num(a.mean_ratio_mid) << '\n';
    }
}

void write_deltas_csv(std::ostream& out, const ComparisonReport& report)
{
    out << "arm_a,arm_b,delta_psnr,band,within_band\n";
    for (const auto& d : report.deltas) {
        out << d.arm_a << ',' << d.arm_b << ',' << num(d.delta_psnr) << ',' << opt_num(d.band) << ','
            << (d.within_band ? (*d.within_band ? "1" : "0") : "") << '\n';
    }
}

} // namespace rgrad
