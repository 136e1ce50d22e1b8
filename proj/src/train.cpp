#include "rgrad/train.hpp"

#include "rgrad/errors.hpp"
#include "rgrad/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>

namespace rgrad {

void adam_step(BlockVectors& params, const BlockVectors& grads, AdamState& state, const PerBlock<double>& lr,
               const AdamConfig& cfg)
{
    require_same_shape(params, grads, "adam_step");
    if (state.step == 0 && state.m.total_size() == 0) {
        state.m = grads;
        state.v = grads;
        for (auto* bv : {&state.m, &state.v})
            for (auto& block : bv->data)
                std::fill(block.begin(), block.end(), 0.0);
    }
    require_same_shape(params, state.m, "adam_step");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (BlockKind k : kAllBlocks) {
        const double rate = lr[index_of(k)];
        auto& p = params[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        const auto& g = grads[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

void TrainConfig::validate() const
{
    if (iterations < 1)
        throw ConfigError("iterations must be >= 1");
    for (double r : lr) {
        if (!(r > 0.0))
            throw ConfigError("learning rates must be positive");
    }
    if (eval_every < 1)
        throw ConfigError("eval_every must be >= 1");
    if (!(pixel_noise >= 0.0))
        throw ConfigError("pixel_noise must be >= 0");
    if (!(sampler.ema_beta > 0.0 && sampler.ema_beta < 1.0))
        throw ConfigError("ema_beta must lie in (0, 1)");
    if (sampler.topk < 1)
        throw ConfigError("topk must be >= 1");
    if (!(sampler.temperature > 0.0))
        throw ConfigError("temperature must be positive");
    if (r_ref && !(*r_ref > 0.0))
        throw ConfigError("r_ref must be positive");
    loss.validate();
}

double RunRecord::online_conflict_rate() const
{
    return online_pairs == 0 ? 0.0 : static_cast<double>(online_conflicts) / static_cast<double>(online_pairs);
}

std::vector<PerBlock<double>> RunRecord::pair_dots() const
{
    std::vector<PerBlock<double>> out;
    for (const auto& r : rows) {
        if (r.view_b >= 0)
            out.push_back(r.dots);
    }
    return out;
}

RegimeMetrics evaluate(const SplatScene& scene, const TargetSet& test_targets, std::span<const CameraSpec> test_cams,
                       double near_threshold, const LossConfig& cfg)
{
    if (test_cams.empty())
        throw std::invalid_argument("evaluate: empty test camera set");
    RegimeMetrics m;
    for (const auto& cam : test_cams) {
        auto it = test_targets.find(cam.id);
        if (it == test_targets.end())
            throw std::invalid_argument("evaluate: no target for camera " + std::to_string(cam.id));
        const Image img = render(scene, cam);
        const double p = psnr(img, it->second);
        const double s = ssim(img, it->second, cfg);
        m.psnr_all += p;
        m.ssim_all += s;
        if (cam.r <= near_threshold) {
            m.psnr_near += p;
            m.ssim_near += s;
            ++m.n_near;
        } else {
            m.psnr_far += p;
            m.ssim_far += s;
            ++m.n_far;
        }
    }
    const double n = static_cast<double>(test_cams.size());
    m.psnr_all /= n;
    m.ssim_all /= n;
    if (m.n_near) {
        m.psnr_near /= static_cast<double>(m.n_near);
        m.ssim_near /= static_cast<double>(m.n_near);
    }
    if (m.n_far) {
        m.psnr_far /= static_cast<double>(m.n_far);
        m.ssim_far /= static_cast<double>(m.n_far);
    }
    return m;
}

RegimeMetrics evaluate(const SplatScene& scene, const SplatScene& target_scene, std::span<const CameraSpec> test_cams,
                       const RegimePartition& partition, const LossConfig& cfg)
{
    for (const auto& cam : test_cams) {
        if (partition.is_near(cam.id) || partition.is_far(cam.id))
            throw std::invalid_argument("evaluate: test camera " + std::to_string(cam.id) +
                                        " is also a training camera");
    }
    return evaluate(scene, render_targets(target_scene, test_cams), test_cams, partition.r_med, cfg);
}

Trainer::Trainer(const SplatScene& scene0, const SplatScene& target_scene, std::vector<CameraSpec> train_cams,
                 std::vector<CameraSpec> test_cams, TrainConfig cfg)
    : layout_(scene0), train_cams_(std::move(train_cams)), test_cams_(std::move(test_cams)), cfg_(std::move(cfg)),
      params_(pack(scene0)), sampler_(cfg_.seed)
{
    cfg_.validate();
    if (train_cams_.empty())
        throw ConfigError("training needs at least one camera");
    if (target_scene.size() == 0)
        throw ConfigError("target scene is empty");

    const bool regime_sampler =
        cfg_.sampler.kind == SamplerKind::Balanced || cfg_.sampler.kind == SamplerKind::Active;
    try {
        partition_ = split_by(train_cams_, cfg_.partition);
    } catch (const DegeneratePartitionError& e) {
        if (regime_sampler)
            throw ConfigError(std::string("regime sampler on a degenerate partition: ") + e.what());
    } catch (const std::invalid_argument& e) {
        if (regime_sampler)
            throw ConfigError(std::string("regime sampler needs a partition: ") + e.what());
    }
    if (partition_) {
        near_threshold_ = partition_->r_med;
    } else if (!test_cams_.empty()) {
        std::vector<double> r;
        for (const auto& c : test_cams_)
            r.push_back(c.r);
        std::sort(r.begin(), r.end());
        near_threshold_ = r[(r.size() - 1) / 2];
    }
    if (!cfg_.r_ref)
        cfg_.reconcile.r_ref = partition_ ? partition_->r_med : train_cams_.front().r;
    else
        cfg_.reconcile.r_ref = *cfg_.r_ref;
    cfg_.reconcile.validate();

    sampler_.ema_beta = cfg_.sampler.ema_beta;
    sampler_.topk = cfg_.sampler.topk;
    sampler_.temperature = cfg_.sampler.temperature;

    train_targets_ = render_targets(target_scene, train_cams_);
    if (cfg_.pixel_noise > 0.0) {
        CounterRng rng(cfg_.seed, /*stream=*/5);
        std::normal_distribution<double> noise(0.0, cfg_.pixel_noise);
        for (auto& [id, img] : train_targets_)
            for (double& v : img.pixels)
                v = std::clamp(v + noise(rng), 0.0, 1.0);
    }
    test_targets_ = render_targets(target_scene, test_cams_);
}

const CameraSpec& Trainer::camera(int id) const
{
    for (const auto& c : train_cams_) {
        if (c.id == id)
            return c;
    }
    throw std::invalid_argument("unknown training camera id " + std::to_string(id));
}

SplatScene Trainer::scene() const { return unpack(params_, layout_); }

GradientSet Trainer::update_gradient(const ViewDraw& draw, IterationRow* row)
{
    const SplatScene current = scene();
    const CameraSpec& cam_a = camera(draw.first);
    BackwardResult a = backward(current, cam_a, train_targets_.at(cam_a.id), cfg_.loss);
    if (row) {
        row->view_a = cam_a.id;
        row->loss_a = a.loss;
    }
    if (!draw.second) {
        if (row)
            row->update_norm = norm(a.grads.blocks.flatten());
        return std::move(a.grads);
    }

    const CameraSpec& cam_b = camera(*draw.second);
    BackwardResult b = backward(current, cam_b, train_targets_.at(cam_b.id), cfg_.loss);
    PairContext ctx{cam_a.r, cam_b.r, &gate_stats_};
    GradientSet update = reconcile(a.grads, b.grads, cfg_.reconcile, ctx);
    if (row) {
        row->view_b = cam_b.id;
        row->loss_b = b.loss;
        row->dots = gate_stats_.dots;
        row->conflict_any = gate_stats_.any_conflict();
        row->update_norm = norm(update.blocks.flatten());
    }
    if (cfg_.sampler.kind == SamplerKind::Active) {
        update_loss_ema(sampler_, cam_a.id, a.loss);
        update_loss_ema(sampler_, cam_b.id, b.loss);
    }
    return update;
}

void Trainer::step()
{
    ++iter_;
    const ViewDraw d = draw(cfg_.sampler.kind, sampler_, train_cams_, partition_ ? &*partition_ : nullptr);
    IterationRow row;
    row.iter = iter_;
    GradientSet update = update_gradient(d, &row);
    if (!update.all_finite() || !std::isfinite(row.loss_a) || !std::isfinite(row.loss_b))
        throw std::runtime_error("non-finite loss or gradient at iteration " + std::to_string(iter_));
    if (row.view_b >= 0) {
        for (double dt : row.dots) {
            ++record_.online_pairs;
            if (dt < 0.0)
                ++record_.online_conflicts;
        }
    }
    adam_step(params_, update.blocks, adam_, cfg_.lr, cfg_.adam);
    record_.rows.push_back(row);

    if (std::find(cfg_.checkpoints.begin(), cfg_.checkpoints.end(), iter_) != cfg_.checkpoints.end())
        checkpoints_[iter_] = scene();
    if (!test_cams_.empty() && (iter_ % cfg_.eval_every == 0 || iter_ == cfg_.iterations))
        evaluate_now();
}

void Trainer::evaluate_now()
{
    if (!record_.evals.empty() && record_.evals.back().iter == iter_)
        return;
    record_.evals.push_back({iter_, evaluate(scene(), test_targets_, test_cams_, near_threshold_, cfg_.loss)});
}

void Trainer::run()
{
    while (iter_ < cfg_.iterations)
        step();
}

TrainResult train(const SplatScene& scene0, const SplatScene& target_scene, std::span<const CameraSpec> train_cams,
                  std::span<const CameraSpec> test_cams, const TrainConfig& cfg)
{
    Trainer t(scene0, target_scene, {train_cams.begin(), train_cams.end()}, {test_cams.begin(), test_cams.end()}, cfg);
    t.run();
    return {t.scene(), t.record(), t.checkpoints(), t.partition()};
}

namespace {

std::string num(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

void write_run_csv(std::ostream& out, const RunRecord& rec)
{
    out << "iter,view_a,view_b,loss_a,loss_b,dot_pos,dot_scale,dot_rot,dot_op,dot_col,conflict_any,update_norm\n";
    for (const auto& r : rec.rows) {
        out << r.iter << ',' << r.view_a << ',' << r.view_b << ',' << num(r.loss_a) << ',' << num(r.loss_b);
        for (double d : r.dots)
            out << ',' << num(d);
        out << ',' << (r.conflict_any ? 1 : 0) << ',' << num(r.update_norm) << '\n';
    }
}

void write_eval_csv(std::ostream& out, const RunRecord& rec)
{
    out << "iter,psnr_all,ssim_all,psnr_near,ssim_near,psnr_far,ssim_far\n";
    for (const auto& e : rec.evals) {
        const auto& m = e.metrics;
        out << e.iter << ',' << num(m.psnr_all) << ',' << num(m.ssim_all) << ',' << num(m.psnr_near) << ','
            << num(m.ssim_near) << ',' << num(m.psnr_far) << ',' << num(m.ssim_far) << '\n';
    }
}

} // namespace rgrad
