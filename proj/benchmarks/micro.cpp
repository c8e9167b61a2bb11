// Microbenchmarks for the hot paths: one-clip forward, full training step,
// and the raw routing pass per router kind. Run with --benchmark_filter=...
#include <benchmark/benchmark.h>

#include <vector>

#include "mmcaps/loss.hpp"
#include "mmcaps/model.hpp"
#include "mmcaps/rng.hpp"

using namespace mmcaps;

namespace {

ModelConfig bench_config(Routing r, std::size_t capsules) {
    ModelConfig cfg;
    cfg.routing = r;
    cfg.capsules = capsules;
    cfg.d1 = 16;
    cfg.d2 = 16;
    cfg.embed_dim = 32;
    cfg.heads = 2;
    cfg.hidden_mlp = 64;
    cfg.routing_iters = 3;
    cfg.video_dim = 64;
    cfg.audio_dim = 48;
    cfg.text_dim = 32;
    return cfg;
}

std::vector<double> random_feat(std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(d);
    for (double& x : out) x = rng.next_normal();
    return out;
}

void bm_forward(benchmark::State& state, Routing r) {
    CapsuleModel model(bench_config(r, static_cast<std::size_t>(state.range(0))), 1);
    std::vector<double> feat = random_feat(64, 2);
    for (auto _ : state) {
        Tensor e = model.embed(feat, Modality::video);
        benchmark::DoNotOptimize(e);
    }
}

void bm_train_step(benchmark::State& state, Routing r) {
    CapsuleModel model(bench_config(r, static_cast<std::size_t>(state.range(0))), 1);
    std::size_t batch = 8;
    std::vector<std::vector<double>> video, audio, text;
    for (std::size_t i = 0; i < batch; ++i) {
        video.push_back(random_feat(64, 10 + i));
        audio.push_back(random_feat(48, 20 + i));
        text.push_back(random_feat(32, 30 + i));
    }
    for (auto _ : state) {
        Tape t;
        Rng drop(0);
        std::vector<Var> ev, ea, et;
        for (std::size_t i = 0; i < batch; ++i) {
            ev.push_back(model.forward(t, video[i], Modality::video, Mode::train, drop));
            ea.push_back(model.forward(t, audio[i], Modality::audio, Mode::train, drop));
            et.push_back(model.forward(t, text[i], Modality::text, Mode::train, drop));
        }
        Var loss = total_loss(t, t.vstack(ev), t.vstack(ea), t.vstack(et), 0.001);
        model.params.zero_grads();
        t.backward(loss);
        benchmark::DoNotOptimize(t.val(loss)(0, 0));
    }
}

void bm_route(benchmark::State& state, Routing r) {
    std::size_t c = static_cast<std::size_t>(state.range(0));
    ModelConfig cfg = bench_config(r, c);
    CapsuleModel model(cfg, 1);
    Rng rng(5);
    Tensor poses(c, cfg.d1), acts(c, 1);
    for (std::size_t i = 0; i < poses.size(); ++i) poses.at(i) = rng.next_normal();
    for (std::size_t i = 0; i < c; ++i) acts(i, 0) = rng.next_uniform(0.1, 0.9);
    for (auto _ : state) {
        Tape t;
        Rng drop(0);
        CapsuleVars out = model.route(t, {t.leaf(poses), t.leaf(acts)}, Modality::video,
                                      Mode::eval, drop);
        benchmark::DoNotOptimize(t.val(out.poses)(0, 0));
    }
}

void bm_pair_loss(benchmark::State& state) {
    std::size_t b = static_cast<std::size_t>(state.range(0));
    Rng rng(6);
    Tensor s(b, b);
    for (std::size_t i = 0; i < s.size(); ++i) s.at(i) = rng.next_uniform(-2, 2);
    for (auto _ : state) benchmark::DoNotOptimize(mms_pair_loss_value(s, 0.001));
}

}  // namespace

BENCHMARK_CAPTURE(bm_forward, self_attention, Routing::self_attention)->Arg(8)->Arg(32);
BENCHMARK_CAPTURE(bm_forward, dynamic, Routing::dynamic)->Arg(8)->Arg(32);
BENCHMARK_CAPTURE(bm_train_step, self_attention, Routing::self_attention)->Arg(8);
BENCHMARK_CAPTURE(bm_train_step, dynamic, Routing::dynamic)->Arg(8);
BENCHMARK_CAPTURE(bm_route, self_attention, Routing::self_attention)->Arg(16)->Arg(64);
BENCHMARK_CAPTURE(bm_route, dynamic, Routing::dynamic)->Arg(16)->Arg(64);
BENCHMARK_CAPTURE(bm_route, em, Routing::em)->Arg(16)->Arg(64);
BENCHMARK_CAPTURE(bm_route, set_transformer, Routing::set_transformer)->Arg(16)->Arg(64);
BENCHMARK(bm_pair_loss)->Arg(16)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
