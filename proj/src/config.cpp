#include "rgrad/config.hpp"

#include "rgrad/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

namespace rgrad {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text)
{
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if constexpr (std::is_floating_point_v<T>) {
        char* end = nullptr;
        value = std::strtod(first, &end);
        if (text.empty() || end != last)
            throw ConfigError("config key '" + key + "': not a number: '" + text + "'");
    } else {
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last)
            throw ConfigError("config key '" + key + "': not an integer: '" + text + "'");
    }
    return value;
}

} // namespace

Config Config::parse(std::istream& in)
{
    Config cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        cfg.entries_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

Config Config::parse_string(const std::string& text)
{
    std::istringstream in(text);
    return parse(in);
}

Config Config::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file " + path.string());
    return parse(in);
}

void Config::set(const std::string& key, const std::string& value) { entries_[trim(key)] = trim(value); }

bool Config::has(const std::string& key) const { return entries_.count(key) != 0; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const
{
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const
{
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : parse_number<double>(key, it->second);
}

int Config::get_int(const std::string& key, int fallback) const
{
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : parse_number<int>(key, it->second);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const
{
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : parse_number<std::uint64_t>(key, it->second);
}

std::vector<std::string> Config::get_list(const std::string& key) const
{
    std::vector<std::string> out;
    auto it = entries_.find(key);
    if (it == entries_.end())
        return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

void Config::require_known(const std::set<std::string>& known, const std::vector<std::string>& prefixes) const
{
    for (const auto& [key, value] : entries_) {
        if (known.count(key))
            continue;
        const bool prefixed = std::any_of(prefixes.begin(), prefixes.end(),
                                          [&](const std::string& p) { return key.rfind(p, 0) == 0; });
        if (!prefixed)
            throw ConfigError("unknown config key '" + key + "'");
    }
}

const std::set<std::string>& train_config_keys()
{
    static const std::set<std::string> keys{
        "iterations", "eval_every", "seed",       "partition",  "pixel_noise", "checkpoints",
        "sampler",    "ema_beta",   "topk",       "temperature", "reconciler", "epsilon",
        "cagrad_c",   "tau",        "gate_beta",  "r_ref",      "adam.beta1",  "adam.beta2",
        "adam.eps",   "loss.lambda_ssim", "loss.ssim_window", "loss.ssim_sigma"};
    return keys;
}

const std::vector<std::string>& train_config_prefixes()
{
    static const std::vector<std::string> prefixes{"lr.", "dispatch.", "d_map."};
    return prefixes;
}

TrainConfig train_config_from(const Config& cfg, TrainConfig base)
{
    TrainConfig t = std::move(base);
    t.iterations = cfg.get_int("iterations", t.iterations);
    t.eval_every = cfg.get_int("eval_every", t.eval_every);
    t.seed = cfg.get_u64("seed", t.seed);
    t.partition = cfg.get_string("partition", t.partition);
    t.pixel_noise = cfg.get_double("pixel_noise", t.pixel_noise);

    try {
        if (cfg.has("sampler"))
            t.sampler.kind = parse_sampler(cfg.get_string("sampler", ""));
        if (cfg.has("reconciler"))
            t.reconcile.op = parse_operator(cfg.get_string("reconciler", ""));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    t.sampler.ema_beta = cfg.get_double("ema_beta", t.sampler.ema_beta);
    t.sampler.topk = cfg.get_int("topk", t.sampler.topk);
    t.sampler.temperature = cfg.get_double("temperature", t.sampler.temperature);

    t.reconcile.epsilon = cfg.get_double("epsilon", t.reconcile.epsilon);
    t.reconcile.cagrad_c = cfg.get_double("cagrad_c", t.reconcile.cagrad_c);
    t.reconcile.tau = cfg.get_double("tau", t.reconcile.tau);
    t.reconcile.gate_beta = cfg.get_double("gate_beta", t.reconcile.gate_beta);
    if (cfg.has("r_ref"))
        t.r_ref = cfg.get_double("r_ref", 1.0);

    t.adam.beta1 = cfg.get_double("adam.beta1", t.adam.beta1);
    t.adam.beta2 = cfg.get_double("adam.beta2", t.adam.beta2);
    t.adam.eps = cfg.get_double("adam.eps", t.adam.eps);

    t.loss.lambda_ssim = cfg.get_double("loss.lambda_ssim", t.loss.lambda_ssim);
    t.loss.ssim_window = cfg.get_int("loss.ssim_window", t.loss.ssim_window);
    t.loss.ssim_sigma = cfg.get_double("loss.ssim_sigma", t.loss.ssim_sigma);

    for (const auto& c : cfg.get_list("checkpoints"))
        t.checkpoints.push_back(parse_number<int>("checkpoints", c));

    std::map<BlockKind, Operator> dispatch;
    for (const auto& [key, value] : cfg.entries()) {
        auto block_of = [&](const std::string& prefix) {
            try {
                return parse_block(key.substr(prefix.size()));
            } catch (const std::invalid_argument& e) {
                throw ConfigError("config key '" + key + "': " + e.what());
            }
        };
        if (key.rfind("lr.", 0) == 0) {
            t.lr[index_of(block_of("lr."))] = parse_number<double>(key, value);
        } else if (key.rfind("d_map.", 0) == 0) {
            t.reconcile.d_map[index_of(block_of("d_map."))] = parse_number<int>(key, value);
        } else if (key.rfind("dispatch.", 0) == 0) {
            try {
                dispatch[block_of("dispatch.")] = parse_operator(value);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("config key '" + key + "': " + e.what());
            }
        }
    }
    if (!dispatch.empty())
        t.reconcile.dispatch = dispatch;

    t.validate();
    return t;
}

} // namespace rgrad
