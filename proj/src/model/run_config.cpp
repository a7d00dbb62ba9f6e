#include "stalign/model/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "stalign/data/manifest.hpp"
#include "stalign/errors.hpp"

namespace stalign::model {

RunConfig RunConfig::desk() { return RunConfig{}; }

RunConfig RunConfig::paper_shape() {
    RunConfig c;
    c.profile = "paper-shape";
    c.model.video = video::SpaceTimeConfig::paper();
    c.model.text = text::TextConfig::paper();
    c.model.proj_dim = 256;
    c.lr = 3e-5;
    c.epochs = 100;
    c.batch_size = 16;
    c.stride = 1;
    return c;
}

RunConfig RunConfig::for_profile(const std::string& profile) {
    if (profile == "desk") return desk();
    if (profile == "paper-shape") return paper_shape();
    throw ConfigError("unknown profile '" + profile + "' (expected desk or paper-shape)");
}

void RunConfig::validate() const {
    for_profile(profile);
    model.validate();
    data::ViewSpec::parse(view_spec).validate();
    if (frames == 0 || frames > model.video.max_frames)
        throw ConfigError("frames must be in [1, video.max_frames]");
    if (stride == 0) throw ConfigError("stride must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train_fraction must be in (0, 1]");
    if (vocab_min_count == 0) throw ConfigError("vocab_min_count must be positive");
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename U>
U parse_uint(const std::string& key, const std::string& v) {
    U out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

// Ordered so that to_text() is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        auto sz = [&t](const std::string& key, std::function<std::size_t&(RunConfig&)> m) {
            t.push_back({key,
                         {[m](const RunConfig& c) { return std::to_string(m(const_cast<RunConfig&>(c))); },
                          [m, key](RunConfig& c, const std::string& v) { m(c) = parse_uint<std::size_t>(key, v); }}});
        };
        auto dbl = [&t](const std::string& key, std::function<double&(RunConfig&)> m) {
            t.push_back({key,
                         {[m](const RunConfig& c) { return fmt_double(m(const_cast<RunConfig&>(c))); },
                          [m, key](RunConfig& c, const std::string& v) { m(c) = parse_double(key, v); }}});
        };
        auto str = [&t](const std::string& key, std::function<std::string&(RunConfig&)> m) {
            t.push_back({key,
                         {[m](const RunConfig& c) { return m(const_cast<RunConfig&>(c)); },
                          [m](RunConfig& c, const std::string& v) { m(c) = v; }}});
        };
        str("profile", [](RunConfig& c) -> std::string& { return c.profile; });
        t.push_back({"seed",
                     {[](const RunConfig& c) { return std::to_string(c.seed); },
                      [](RunConfig& c, const std::string& v) { c.seed = parse_uint<std::uint64_t>("seed", v); }}});
        str("corpus", [](RunConfig& c) -> std::string& { return c.corpus; });
        str("view_spec", [](RunConfig& c) -> std::string& { return c.view_spec; });
        sz("frames", [](RunConfig& c) -> std::size_t& { return c.frames; });
        sz("stride", [](RunConfig& c) -> std::size_t& { return c.stride; });
        sz("batch_size", [](RunConfig& c) -> std::size_t& { return c.batch_size; });
        sz("epochs", [](RunConfig& c) -> std::size_t& { return c.epochs; });
        dbl("lr", [](RunConfig& c) -> double& { return c.lr; });
        dbl("adam.beta1", [](RunConfig& c) -> double& { return c.beta1; });
        dbl("adam.beta2", [](RunConfig& c) -> double& { return c.beta2; });
        dbl("adam.eps", [](RunConfig& c) -> double& { return c.adam_eps; });
        dbl("train_fraction", [](RunConfig& c) -> double& { return c.train_fraction; });
        sz("val_every", [](RunConfig& c) -> std::size_t& { return c.val_every; });
        sz("vocab_min_count", [](RunConfig& c) -> std::size_t& { return c.vocab_min_count; });
        sz("proj_dim", [](RunConfig& c) -> std::size_t& { return c.model.proj_dim; });
        dbl("sigma", [](RunConfig& c) -> double& { return c.model.sigma; });
        t.push_back({"learn_sigma",
                     {[](const RunConfig& c) { return std::string(c.model.learn_sigma ? "true" : "false"); },
                      [](RunConfig& c, const std::string& v) { c.model.learn_sigma = parse_bool("learn_sigma", v); }}});
        sz("video.patch_size", [](RunConfig& c) -> std::size_t& { return c.model.video.patch_size; });
        sz("video.embed_dim", [](RunConfig& c) -> std::size_t& { return c.model.video.embed_dim; });
        sz("video.num_blocks", [](RunConfig& c) -> std::size_t& { return c.model.video.num_blocks; });
        sz("video.num_heads", [](RunConfig& c) -> std::size_t& { return c.model.video.num_heads; });
        sz("video.max_frames", [](RunConfig& c) -> std::size_t& { return c.model.video.max_frames; });
        sz("video.height", [](RunConfig& c) -> std::size_t& { return c.model.video.height; });
        sz("video.width", [](RunConfig& c) -> std::size_t& { return c.model.video.width; });
        sz("video.mlp_ratio", [](RunConfig& c) -> std::size_t& { return c.model.video.mlp_ratio; });
        sz("text.embed_dim", [](RunConfig& c) -> std::size_t& { return c.model.text.embed_dim; });
        sz("text.num_layers", [](RunConfig& c) -> std::size_t& { return c.model.text.num_layers; });
        sz("text.num_heads", [](RunConfig& c) -> std::size_t& { return c.model.text.num_heads; });
        sz("text.max_len", [](RunConfig& c) -> std::size_t& { return c.model.text.max_len; });
        sz("text.mlp_ratio", [](RunConfig& c) -> std::size_t& { return c.model.text.mlp_ratio; });
        return t;
    }();
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& [key, f] : fields()) os << key << '=' << f.get(*this) << '\n';
    return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (seen.count(key))
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        seen[key] = lineno;
        entries.emplace_back(std::move(key), std::move(value));
    }

    std::string profile = "desk";
    for (const auto& [k, v] : entries)
        if (k == "profile") profile = v;
    RunConfig c = for_profile(profile);

    for (const auto& [k, v] : entries) {
        const auto& table = fields();
        auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == k; });
        if (it == table.end())
            throw ConfigError("config line " + std::to_string(seen[k]) + ": unknown key '" + k + "'");
        it->second.set(c, v);
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return parse(os.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write config " + path.string());
    f << to_text();
    if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace stalign::model
