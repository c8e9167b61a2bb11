#include "mmcaps/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "mmcaps/errors.hpp"
#include "mmcaps/loss.hpp"
#include "mmcaps/rng.hpp"

namespace mmcaps {

void BenchConfig::validate() const {
    if (rows.empty()) throw ConfigError("bench: empty grid");
    if (batch < 2) throw ConfigError("batch: must be >= 2");
    if (repeats < 5) throw ConfigError("repeats: must be >= 5");
    if (warmups < 2) throw ConfigError("warmups: must be >= 2");
    for (const BenchRowSpec& r : rows) bench_model_config(r).validate();
}

ModelConfig bench_model_config(const BenchRowSpec& row) {
    ModelConfig mc;
    mc.routing = row.routing;
    mc.capsules = row.capsules;
    mc.d1 = row.d1;
    mc.d2 = row.d2;
    mc.routing_iters = row.iters;
    mc.heads = row.d2 % 4 == 0 ? 4 : 1;
    mc.hidden_mlp = 4 * row.d2;
    mc.embed_dim = 64;
    mc.video_dim = 64;
    mc.audio_dim = 48;
    mc.text_dim = 32;
    mc.dropout_p = 0.1;
    return mc;
}

namespace {

struct BenchInputs {
    std::vector<std::vector<double>> video, audio, text;
};

BenchInputs make_inputs(const ModelConfig& mc, std::size_t batch, Rng stream) {
    BenchInputs in;
    auto fill = [&](std::vector<std::vector<double>>& dst, std::size_t dim) {
        dst.resize(batch);
        for (auto& row : dst) {
            row.resize(dim);
            for (auto& v : row) v = stream.next_normal();
        }
    };
    fill(in.video, mc.video_dim);
    fill(in.audio, mc.audio_dim);
    fill(in.text, mc.text_dim);
    return in;
}

// One training-shaped step; parameters are left untouched so repetitions
// see identical work.
double one_step(CapsuleModel& model, const BenchInputs& in, Rng drop_rng) {
    Tape tape;
    std::vector<Var> ev, ea, et;
    for (std::size_t b = 0; b < in.video.size(); ++b) {
        ev.push_back(model.forward(tape, in.video[b], Modality::video, Mode::train, drop_rng));
        ea.push_back(model.forward(tape, in.audio[b], Modality::audio, Mode::train, drop_rng));
        et.push_back(model.forward(tape, in.text[b], Modality::text, Mode::train, drop_rng));
    }
    Var loss = total_loss(tape, tape.vstack(ev), tape.vstack(ea), tape.vstack(et), 0.001);
    model.params.zero_grads();
    tape.backward(loss);
    double l = tape.val(loss)(0, 0);
    model.params.zero_grads();
    return l;
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
    cfg.validate();
    std::vector<BenchRow> out;
    out.reserve(cfg.rows.size());
    for (const BenchRowSpec& spec : cfg.rows) {
        ModelConfig mc = bench_model_config(spec);
        CapsuleModel model(mc, cfg.seed);
        BenchInputs inputs = make_inputs(mc, cfg.batch, Rng(cfg.seed).split(17));
        Rng drop_root = Rng(cfg.seed).split(23);

        BenchRow row;
        row.routing = spec.routing;
        row.capsules = spec.capsules;
        row.d1 = spec.d1;
        row.d2 = spec.d2;
        row.iters = spec.iters;
        row.batch = cfg.batch;

        for (std::size_t w = 0; w < cfg.warmups; ++w) one_step(model, inputs, drop_root.split(w));

        std::int64_t base = alloc_stats::current_bytes();
        alloc_stats::reset_peak();
        one_step(model, inputs, drop_root.split(1000));
        row.peak_bytes = alloc_stats::peak_bytes() - base;

        row.ms_samples.reserve(cfg.repeats);
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
            auto t0 = std::chrono::steady_clock::now();
            one_step(model, inputs, drop_root.split(2000 + r));
            auto t1 = std::chrono::steady_clock::now();
            row.ms_samples.push_back(
                std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        double mean = 0;
        for (double s : row.ms_samples) mean += s;
        mean /= static_cast<double>(row.ms_samples.size());
        double var = 0;
        for (double s : row.ms_samples) var += (s - mean) * (s - mean);
        var /= static_cast<double>(row.ms_samples.size());
        row.ms_mean = mean;
        row.ms_std = std::sqrt(var);
        out.push_back(std::move(row));
    }
    return out;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string out = "routing,C,d1,d2,iters,batch,ms_mean,ms_std,peak_bytes\n";
    char buf[256];
    for (const BenchRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%zu,%zu,%zu,%.6f,%.6f,%lld\n",
                      to_string(r.routing), r.capsules, r.d1, r.d2, r.iters, r.batch, r.ms_mean,
                      r.ms_std, static_cast<long long>(r.peak_bytes));
        out += buf;
    }
    return out;
}

std::string bench_json(const std::vector<BenchRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const BenchRow& r : rows)
        arr.push_back({{"routing", to_string(r.routing)},
                       {"C", r.capsules},
                       {"d1", r.d1},
                       {"d2", r.d2},
                       {"iters", r.iters},
                       {"batch", r.batch},
                       {"ms_mean", r.ms_mean},
                       {"ms_std", r.ms_std},
                       {"peak_bytes", r.peak_bytes}});
    return arr.dump(2) + "\n";
}

}  // namespace mmcaps
