#include "stargraph/config.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "stargraph/util.hpp"

namespace stargraph {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::int64_t to_i64(const std::string& key, const std::string& v) {
    std::int64_t x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size()) fail("config: bad integer for '" + key + "': " + v);
    return x;
}

double to_f64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) fail("config: bad number for '" + key + "': " + v);
        return x;
    } catch (const std::invalid_argument&) {
        fail("config: bad number for '" + key + "': " + v);
    } catch (const std::out_of_range&) {
        fail("config: number out of range for '" + key + "': " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail("config: bad boolean for '" + key + "': " + v);
}

}  // namespace

EncoderConfig RunConfig::encoder_config() const {
    EncoderConfig e;
    e.d_a = d_a;
    e.d_n = d_n;
    e.k_anchors = k_anchors;
    e.m_neighbors = m_neighbors;
    e.use_neighbors = use_neighbors;
    e.use_center = use_center;
    if (encoder == "attention")
        e.kind = EncoderKind::Attention;
    else if (encoder == "mlp")
        e.kind = EncoderKind::Mlp;
    else
        fail("config: encoder must be 'attention' or 'mlp', got '" + encoder + "'");
    e.heads = heads;
    e.ffn_mult = ffn_mult;
    e.dropout = dropout;
    return e;
}

ScoreConfig RunConfig::score_config() const {
    ScoreConfig s;
    if (score == "triplere_prime")
        s.variant = ScoreVariant::TripleRePrime;
    else if (score == "triplere_v2")
        s.variant = ScoreVariant::TripleReV2;
    else
        fail("config: score must be 'triplere_prime' or 'triplere_v2', got '" + score + "'");
    if (norm == "l1")
        s.norm = Norm::L1;
    else if (norm == "l2")
        s.norm = Norm::L2;
    else
        fail("config: norm must be 'l1' or 'l2', got '" + norm + "'");
    s.u = u;
    s.gamma = gamma;
    s.alpha = alpha;
    return s;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.neg_size = neg_size;
    t.max_steps = max_steps;
    t.lr = lr;
    t.lr_decay_factor = lr_decay_factor;
    t.dropout = dropout;
    t.weight_decay = weight_decay;
    t.adam_beta1 = adam_beta1;
    t.adam_beta2 = adam_beta2;
    t.adam_eps = adam_eps;
    t.seed = seed;
    t.checkpoint_interval = checkpoint_interval;
    t.valid_interval = valid_interval;
    if (t.batch_size <= 0 || t.neg_size <= 0 || t.max_steps <= 0 || t.lr <= 0) fail("config: trainer values must be positive");
    return t;
}

std::string RunConfig::echo() const {
    std::ostringstream os;
    os.precision(17);
    // Sorted keys, one per line.
    std::map<std::string, std::string> kv;
    auto put_i = [&](const char* k, std::int64_t v) { kv[k] = std::to_string(v); };
    auto put_f = [&](const char* k, double v) {
        std::ostringstream t;
        t.precision(17);
        t << v;
        kv[k] = t.str();
    };
    auto put_b = [&](const char* k, bool v) { kv[k] = v ? "true" : "false"; };
    auto put_s = [&](const char* k, const std::string& v) { kv[k] = v; };

    put_i("seed", static_cast<std::int64_t>(seed));
    put_i("threads", threads);
    put_i("d_a", d_a);
    put_i("d_n", d_n);
    put_i("k_anchors", k_anchors);
    put_i("m_neighbors", m_neighbors);
    put_b("use_neighbors", use_neighbors);
    put_b("use_center", use_center);
    put_s("encoder", encoder);
    put_i("heads", heads);
    put_i("ffn_mult", ffn_mult);
    put_s("score", score);
    put_f("u", u);
    put_s("norm", norm);
    put_f("gamma", gamma);
    put_f("alpha", alpha);
    put_i("batch_size", batch_size);
    put_i("neg_size", neg_size);
    put_i("max_steps", max_steps);
    put_f("lr", lr);
    put_f("lr_decay_factor", lr_decay_factor);
    put_f("dropout", dropout);
    put_f("weight_decay", weight_decay);
    put_f("adam_beta1", adam_beta1);
    put_f("adam_beta2", adam_beta2);
    put_f("adam_eps", adam_eps);
    put_i("checkpoint_interval", checkpoint_interval);
    put_i("valid_interval", valid_interval);
    put_i("num_anchors", num_anchors);
    put_i("bfs_cap", bfs_cap);

    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    return os.str();
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "seed")
        seed = static_cast<std::uint64_t>(to_i64(key, value));
    else if (key == "threads")
        threads = static_cast<int>(to_i64(key, value));
    else if (key == "d_a")
        d_a = to_i64(key, value);
    else if (key == "d_n")
        d_n = to_i64(key, value);
    else if (key == "k_anchors")
        k_anchors = static_cast<std::int32_t>(to_i64(key, value));
    else if (key == "m_neighbors")
        m_neighbors = static_cast<std::int32_t>(to_i64(key, value));
    else if (key == "use_neighbors")
        use_neighbors = to_bool(key, value);
    else if (key == "use_center")
        use_center = to_bool(key, value);
    else if (key == "encoder")
        encoder = value;
    else if (key == "heads")
        heads = static_cast<int>(to_i64(key, value));
    else if (key == "ffn_mult")
        ffn_mult = static_cast<int>(to_i64(key, value));
    else if (key == "score")
        score = value;
    else if (key == "u")
        u = to_f64(key, value);
    else if (key == "norm")
        norm = value;
    else if (key == "gamma")
        gamma = to_f64(key, value);
    else if (key == "alpha")
        alpha = to_f64(key, value);
    else if (key == "batch_size")
        batch_size = to_i64(key, value);
    else if (key == "neg_size")
        neg_size = to_i64(key, value);
    else if (key == "max_steps")
        max_steps = to_i64(key, value);
    else if (key == "lr")
        lr = to_f64(key, value);
    else if (key == "lr_decay_factor")
        lr_decay_factor = to_f64(key, value);
    else if (key == "dropout")
        dropout = to_f64(key, value);
    else if (key == "weight_decay")
        weight_decay = to_f64(key, value);
    else if (key == "adam_beta1")
        adam_beta1 = to_f64(key, value);
    else if (key == "adam_beta2")
        adam_beta2 = to_f64(key, value);
    else if (key == "adam_eps")
        adam_eps = to_f64(key, value);
    else if (key == "checkpoint_interval")
        checkpoint_interval = to_i64(key, value);
    else if (key == "valid_interval")
        valid_interval = to_i64(key, value);
    else if (key == "num_anchors")
        num_anchors = to_i64(key, value);
    else if (key == "bfs_cap")
        bfs_cap = static_cast<std::int32_t>(to_i64(key, value));
    else
        fail("config: unknown key '" + key + "'");
}

void RunConfig::apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open config file: " + path);
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(path + ":" + std::to_string(lineno) + ": expected key=value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        try {
            set(key, value);
        } catch (const std::runtime_error& e) {
            fail(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

RunConfig RunConfig::from_echo(const std::string& echo_text) {
    RunConfig cfg;
    std::istringstream is(echo_text);
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("config echo: expected key=value, got '" + line + "'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

}  // namespace stargraph
