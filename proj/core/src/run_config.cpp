#include "flowedge/run_config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "flowedge/errors.hpp"
#include "flowedge/netpbm.hpp"

namespace flowedge {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("invalid boolean '" + v + "' for key '" + key + "' (use true or false)");
}

std::string show(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

struct Field {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define FE_SIZE(name, member)                                                                                  \
    Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_number<std::size_t>(name, v); }, \
          [](const RunConfig& c) { return std::to_string(c.member); }}
#define FE_U64(name, member)                                                                                     \
    Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_number<std::uint64_t>(name, v); }, \
          [](const RunConfig& c) { return std::to_string(c.member); }}
#define FE_DOUBLE(name, member)                                                                           \
    Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(name, v); }, \
          [](const RunConfig& c) { return show(c.member); }}
#define FE_BOOL(name, member)                                                                 \
    Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
          [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        FE_U64("seed", seed),
        Field{"scene", [](RunConfig& c, const std::string& v) { c.scene = v; }, [](const RunConfig& c) { return c.scene; }},
        FE_SIZE("count", count),
        FE_SIZE("min_shapes", min_shapes),
        FE_SIZE("max_shapes", max_shapes),
        FE_SIZE("annotators", annotators),
        FE_DOUBLE("jitter", jitter),
        FE_DOUBLE("texture_noise", texture_noise),
        FE_SIZE("d_model", net.d_model),
        FE_SIZE("blocks", net.blocks),
        FE_SIZE("heads", net.heads),
        FE_SIZE("rank", net.rank),
        FE_SIZE("prompt_tokens", net.prompt_tokens),
        FE_SIZE("mlp_ratio", net.mlp_ratio),
        FE_SIZE("patch", net.patch),
        FE_SIZE("canvas", net.canvas),
        FE_U64("codec_seed", net.codec_seed),
        FE_U64("init_seed", init_seed),
        FE_U64("lora_seed", lora_seed),
        FE_SIZE("pretrain_iterations", pretrain_iterations),
        FE_SIZE("finetune_iterations", finetune_iterations),
        FE_SIZE("batch", batch),
        FE_DOUBLE("lr", lr),
        FE_DOUBLE("weight_decay", weight_decay),
        FE_BOOL("pixel_term", pixel_term),
        FE_BOOL("augment", augment),
        FE_SIZE("checkpoint_every", checkpoint_every),
        FE_DOUBLE("eta", eta),
        FE_DOUBLE("lambda", lambda),
        FE_SIZE("steps", steps),
        FE_DOUBLE("guidance", guidance),
        FE_BOOL("use_cfg", use_cfg),
        Field{"gammas",
              [](RunConfig& c, const std::string& v) {
                  std::vector<double> g;
                  std::stringstream ss(v);
                  std::string item;
                  while (std::getline(ss, item, ',')) g.push_back(parse_number<double>("gammas", trim(item)));
                  if (g.empty()) throw ConfigError("gammas must list at least one value");
                  c.gammas = std::move(g);
              },
              [](const RunConfig& c) {
                  std::string s;
                  for (std::size_t i = 0; i < c.gammas.size(); ++i) s += (i ? "," : "") + show(c.gammas[i]);
                  return s;
              }},
        FE_DOUBLE("tolerance", tolerance),
        FE_SIZE("thresholds", thresholds),
        FE_SIZE("threads", threads),
    };
    return table;
}

#undef FE_SIZE
#undef FE_U64
#undef FE_DOUBLE
#undef FE_BOOL

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const Field& f : fields())
        if (key == f.key) {
            f.set(*this, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> out;
    for (const Field& f : fields()) out.push_back(f.key);
    return out;
}

void RunConfig::validate() const {
    if (scene != "shapes" && scene != "floor_plan") throw ConfigError("scene must be 'shapes' or 'floor_plan'");
    net.validate();
    scene_spec().validate();
    if (batch == 0) throw ConfigError("batch must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (steps == 0) throw ConfigError("steps must be at least 1");
    if (!(guidance >= 0.0)) throw ConfigError("guidance must be non-negative");
    for (double g : gammas)
        if (!(g >= 0.0)) throw ConfigError("gammas must be non-negative");
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
    if (thresholds == 0) throw ConfigError("thresholds must be at least 1");
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must lie in (0, 1)");
    if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const Field& f : fields()) out += std::string(f.key) + "=" + f.get(*this) + "\n";
    return out;
}

SceneSpec RunConfig::scene_spec() const {
    SceneSpec s;
    s.seed = seed;
    s.kind = floor_plan() ? SceneKind::floor_plan : SceneKind::shapes;
    s.canvas = net.canvas;
    s.min_shapes = min_shapes;
    s.max_shapes = max_shapes;
    s.annotators = annotators;
    s.jitter = jitter;
    s.texture_noise = texture_noise;
    return s;
}

TrainConfig RunConfig::train_config(Phase phase) const {
    TrainConfig t;
    t.phase = phase;
    t.iterations = phase == Phase::pretrain ? pretrain_iterations : finetune_iterations;
    t.batch = batch;
    t.lr = lr;
    t.weight_decay = weight_decay;
    t.seed = seed;
    t.pixel = pixel();
    t.pixel_term = pixel_term;
    t.augment = augment;
    t.floor_plan = floor_plan();
    t.checkpoint_every = checkpoint_every;
    return t;
}

InferOptions RunConfig::infer_options() const {
    InferOptions o;
    o.steps = steps;
    o.guidance = guidance;
    o.use_cfg = use_cfg;
    o.seed = seed;
    o.threads = threads;
    o.floor_plan = floor_plan();
    return o;
}

SweepOptions RunConfig::sweep_options(EvalMode mode) const {
    SweepOptions s;
    s.mode = mode;
    s.tolerance.fraction = tolerance;
    s.eta = eta;
    s.thresholds = uniform_thresholds(thresholds);
    return s;
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig c;
    std::stringstream ss(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(ss, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
        try {
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(n) + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    try {
        return parse_run_config(text);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace flowedge
