#include "mmcaps/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mmcaps/errors.hpp"

namespace mmcaps {
namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
    std::uint64_t lo = get_u32(in);
    std::uint64_t hi = get_u32(in);
    return lo | (hi << 32);
}

double get_f64(std::istream& in) {
    std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void put_entry(std::ostream& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t.at(i));
}

nlohmann::json model_to_json(const ModelConfig& c) {
    return {{"routing", to_string(c.routing)}, {"capsules", c.capsules},
            {"d1", c.d1},                      {"d2", c.d2},
            {"embed_dim", c.embed_dim},        {"heads", c.heads},
            {"hidden_mlp", c.hidden_mlp},      {"dropout_p", c.dropout_p},
            {"routing_iters", c.routing_iters},{"share_weights", c.share_weights},
            {"video_dim", c.video_dim},        {"audio_dim", c.audio_dim},
            {"text_dim", c.text_dim}};
}

ModelConfig model_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.routing = routing_from_string(j.at("routing").get<std::string>());
    c.capsules = j.at("capsules").get<std::size_t>();
    c.d1 = j.at("d1").get<std::size_t>();
    c.d2 = j.at("d2").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.hidden_mlp = j.at("hidden_mlp").get<std::size_t>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.routing_iters = j.at("routing_iters").get<std::size_t>();
    c.share_weights = j.at("share_weights").get<bool>();
    c.video_dim = j.at("video_dim").get<std::size_t>();
    c.audio_dim = j.at("audio_dim").get<std::size_t>();
    c.text_dim = j.at("text_dim").get<std::size_t>();
    return c;
}

nlohmann::json train_to_json(const TrainConfig& c) {
    return {{"lr", c.lr0},
            {"total_steps", c.total_steps},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"delta", c.delta},
            {"eval_every", c.eval_every},
            {"grad_clip", c.grad_clip},
            {"checkpoint_path", c.checkpoint_path}};
}

TrainConfig train_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr0 = j.at("lr").get<double>();
    c.total_steps = j.at("total_steps").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.delta = j.at("delta").get<double>();
    c.eval_every = j.at("eval_every").get<std::size_t>();
    c.grad_clip = j.at("grad_clip").get<double>();
    c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const CapsuleModel& model, const TrainConfig& cfg,
                     const TrainState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, 4);
    put_u32(out, kVersion);

    const ParamSet& params = model.params;
    std::uint32_t n =
        static_cast<std::uint32_t>(params.count() * 3 + 1);  // values, m, v, adam step
    put_u32(out, n);
    for (std::size_t p = 0; p < params.count(); ++p) put_entry(out, params[p].name, params[p].value);
    for (std::size_t p = 0; p < params.count(); ++p)
        put_entry(out, "adam.m." + params[p].name,
                  p < state.adam.m.size() ? state.adam.m[p]
                                          : Tensor(params[p].value.rows(), params[p].value.cols()));
    for (std::size_t p = 0; p < params.count(); ++p)
        put_entry(out, "adam.v." + params[p].name,
                  p < state.adam.v.size() ? state.adam.v[p]
                                          : Tensor(params[p].value.rows(), params[p].value.cols()));
    put_entry(out, "adam.t", Tensor::scalar(static_cast<double>(state.adam.t)));

    put_u64(out, state.rng_key);
    put_u64(out, state.rng_counter);

    nlohmann::json cfgs{{"model", model_to_json(model.config())},
                        {"train", train_to_json(cfg)},
                        {"step", state.step}};
    std::string blob = cfgs.dump();
    put_u32(out, static_cast<std::uint32_t>(blob.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw FormatError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4)) throw FormatError("checkpoint: truncated");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic in " + path);
    std::uint32_t version = get_u32(in);
    if (version != kVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));

    Checkpoint ck;
    std::uint32_t n = get_u32(in);
    ck.entries.reserve(n);
    for (std::uint32_t e = 0; e < n; ++e) {
        std::uint32_t len = get_u32(in);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw FormatError("checkpoint: truncated");
        std::uint32_t rows = get_u32(in);
        std::uint32_t cols = get_u32(in);
        Tensor t(rows, cols);
        for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = get_f64(in);
        ck.entries.emplace_back(std::move(name), std::move(t));
    }
    ck.rng_key = get_u64(in);
    ck.rng_counter = get_u64(in);
    std::uint32_t blob_len = get_u32(in);
    std::string blob(blob_len, '\0');
    if (!in.read(blob.data(), blob_len)) throw FormatError("checkpoint: truncated");
    nlohmann::json cfgs;
    try {
        cfgs = nlohmann::json::parse(blob);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad config blob: ") + e.what());
    }
    ck.model = model_from_json(cfgs.at("model"));
    ck.train = train_from_json(cfgs.at("train"));
    ck.step = cfgs.at("step").get<std::size_t>();
    return ck;
}

CapsuleModel model_from_checkpoint(const Checkpoint& ck) {
    CapsuleModel model(ck.model, 0);
    for (std::size_t p = 0; p < model.params.count(); ++p) {
        Parameter& par = model.params[p];
        bool found = false;
        for (const auto& [name, t] : ck.entries)
            if (name == par.name) {
                if (!t.same_shape(par.value))
                    throw FormatError("checkpoint: " + name + " stored " + t.shape_str() +
                                      " vs expected " + par.value.shape_str());
                par.value = t;
                found = true;
                break;
            }
        if (!found) throw FormatError("checkpoint: missing parameter " + par.name);
    }
    return model;
}

TrainState state_from_checkpoint(const Checkpoint& ck, const CapsuleModel& model) {
    TrainState st;
    st.adam = AdamState(model.params);
    auto find = [&](const std::string& name) -> const Tensor& {
        for (const auto& [n, t] : ck.entries)
            if (n == name) return t;
        throw FormatError("checkpoint: missing entry " + name);
    };
    for (std::size_t p = 0; p < model.params.count(); ++p) {
        st.adam.m[p] = find("adam.m." + model.params[p].name);
        st.adam.v[p] = find("adam.v." + model.params[p].name);
    }
    st.adam.t = static_cast<std::int64_t>(find("adam.t")(0, 0));
    st.rng_key = ck.rng_key;
    st.rng_counter = ck.rng_counter;
    st.step = ck.step;
    return st;
}

}  // namespace mmcaps
