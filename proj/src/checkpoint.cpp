#include "stargraph/checkpoint.hpp"

#include <cstring>

#include "stargraph/util.hpp"

namespace stargraph {

namespace {

constexpr char kCkptMagic[5] = {'S', 'G', 'C', 'K', '1'};

void write_tensor(BinWriter& w, const Tensor& t) {
    w.u64(static_cast<std::uint64_t>(t.rank()));
    for (const auto d : t.shape) w.i64(d);
    for (const auto v : t.data) w.f32(v);
}

Tensor read_tensor(BinReader& r) {
    const auto rank = r.u64();
    std::vector<std::int64_t> shape(rank);
    for (auto& d : shape) d = r.i64();
    Tensor t(shape);
    for (auto& v : t.data) v = r.f32();
    return t;
}

void write_f64(BinWriter& w, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    w.u64(bits);
}

double read_f64(BinReader& r) {
    const auto bits = r.u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model, AdamW* optimizer, const CheckpointMeta& meta) {
    // Write to a temp file then rename so a crash never corrupts the previous
    // checkpoint.
    const std::string tmp = path + ".tmp";
    {
        BinWriter w(tmp);
        w.bytes(kCkptMagic, sizeof(kCkptMagic));
        w.str(meta.config_echo);
        w.i64(meta.step);
        write_f64(w, meta.best_valid_mrr);
        w.i64(meta.best_valid_step);
        w.str(meta.rng_state);

        const auto params = model.parameters();
        w.u64(params.size());
        for (const auto* p : params) {
            w.str(p->name);
            write_tensor(w, p->value);
        }
        w.u8(optimizer ? 1 : 0);
        if (optimizer) {
            w.i64(optimizer->step_count());
            for (std::size_t i = 0; i < params.size(); ++i) {
                write_tensor(w, optimizer->moments1()[i]);
                write_tensor(w, optimizer->moments2()[i]);
            }
        }
        w.close();
    }
    std::remove(path.c_str());
    if (std::rename(tmp.c_str(), path.c_str()) != 0) fail("cannot move checkpoint into place: " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, Model& model, AdamW* optimizer) {
    BinReader r(path);
    char magic[5];
    r.bytes(magic, 5);
    if (std::memcmp(magic, kCkptMagic, 5) != 0) fail(path + ": not a checkpoint file (bad magic)");
    CheckpointMeta meta;
    meta.config_echo = r.str();
    meta.step = r.i64();
    meta.best_valid_mrr = read_f64(r);
    meta.best_valid_step = r.i64();
    meta.rng_state = r.str();

    const auto params = model.parameters();
    const auto count = r.u64();
    if (count != params.size())
        fail(path + ": parameter count mismatch (file " + std::to_string(count) + ", model " +
             std::to_string(params.size()) + "); was the checkpoint written with a different config?");
    for (auto* p : params) {
        const auto name = r.str();
        if (name != p->name) fail(path + ": parameter order mismatch, expected '" + p->name + "', found '" + name + "'");
        auto t = read_tensor(r);
        if (t.shape != p->value.shape) fail(path + ": shape mismatch for parameter '" + name + "'");
        p->value = std::move(t);
    }
    const bool has_opt = r.u8() != 0;
    if (optimizer) {
        if (!has_opt) fail(path + ": checkpoint has no optimizer state");
        optimizer->set_step_count(r.i64());
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto m = read_tensor(r);
            auto v = read_tensor(r);
            if (m.shape != params[i]->value.shape || v.shape != params[i]->value.shape)
                fail(path + ": optimizer state shape mismatch for '" + params[i]->name + "'");
            optimizer->moments1()[i] = std::move(m);
            optimizer->moments2()[i] = std::move(v);
        }
    }
    return meta;
}

std::string checkpoint_config_echo(const std::string& path) {
    BinReader r(path);
    char magic[5];
    r.bytes(magic, 5);
    if (std::memcmp(magic, kCkptMagic, 5) != 0) fail(path + ": not a checkpoint file (bad magic)");
    return r.str();
}

}  // namespace stargraph
