#include "mmcaps/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "mmcaps/checkpoint.hpp"
#include "mmcaps/errors.hpp"
#include "mmcaps/loss.hpp"

namespace mmcaps {

void TrainConfig::validate(std::size_t dataset_size) const {
    if (lr0 <= 0.0) throw ConfigError("lr: must be > 0");
    if (total_steps < 1) throw ConfigError("total_steps: must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size: must be >= 2");
    if (delta < 0.0) throw ConfigError("delta: must be >= 0");
    if (eval_every < 1) throw ConfigError("eval_every: must be >= 1");
    if (dataset_size < batch_size)
        throw ConfigError("batch_size: dataset has " + std::to_string(dataset_size) +
                          " clips, need >= " + std::to_string(batch_size));
}

namespace {

std::vector<std::size_t> epoch_permutation(std::size_t n, Rng stream) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = stream.next_u64() % i;
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

}  // namespace

TrainResult train(CapsuleModel& model, const TrainConfig& cfg, const TripleDataset& data,
                  TrainState* state, std::ostream* metrics) {
    cfg.validate(data.size());

    TrainState local;
    if (!state) state = &local;
    if (state->adam.m.empty()) state->adam = AdamState(model.params);
    Rng master(cfg.seed);
    if (state->step == 0) {
        state->rng_key = master.key();
        state->rng_counter = master.counter();
    }
    Rng shuffle_root = master.split(1);
    Rng dropout_root = master.split(2);

    std::size_t steps_per_epoch = data.size() / cfg.batch_size;
    std::size_t cur_epoch = static_cast<std::size_t>(-1);
    std::vector<std::size_t> perm;

    std::size_t stop = cfg.total_steps;
    if (cfg.stop_at_step > 0 && cfg.stop_at_step < stop) stop = cfg.stop_at_step;

    TrainResult res;
    auto t0 = std::chrono::steady_clock::now();
    bool first = true;
    for (std::size_t step = state->step; step < stop; ++step) {
        std::size_t epoch = step / steps_per_epoch;
        if (epoch != cur_epoch) {
            perm = epoch_permutation(data.size(), shuffle_root.split(epoch));
            cur_epoch = epoch;
        }
        std::size_t pos = (step % steps_per_epoch) * cfg.batch_size;

        double lr = cosine_lr(step, cfg.total_steps, cfg.lr0);
        Rng drop_rng = dropout_root.split(step);
        Tape tape;
        std::vector<Var> ev, ea, et;
        ev.reserve(cfg.batch_size);
        ea.reserve(cfg.batch_size);
        et.reserve(cfg.batch_size);
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            std::size_t i = perm[pos + b];
            ev.push_back(model.forward(tape, data.row(Modality::video, i), Modality::video,
                                       Mode::train, drop_rng));
            ea.push_back(model.forward(tape, data.row(Modality::audio, i), Modality::audio,
                                       Mode::train, drop_rng));
            et.push_back(model.forward(tape, data.row(Modality::text, i), Modality::text,
                                       Mode::train, drop_rng));
        }
        Var loss = total_loss(tape, tape.vstack(ev), tape.vstack(ea), tape.vstack(et), cfg.delta);
        double loss_val = tape.val(loss)(0, 0);
        if (first) {
            res.initial_loss = loss_val;
            first = false;
        }
        res.final_loss = loss_val;

        model.params.zero_grads();
        tape.backward(loss);
        if (cfg.grad_clip > 0.0) clip_global_norm(model.params, cfg.grad_clip);
        state->adam.step(model.params, lr);
        res.steps_run += 1;
        state->step = step + 1;

        if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.total_steps) {
            double wall =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
            MetricsRecord rec{step + 1, lr, loss_val, wall};
            res.records.push_back(rec);
            if (metrics) {
                nlohmann::json j{{"step", rec.step}, {"lr", rec.lr}, {"loss", rec.loss},
                                 {"wall_ms", rec.wall_ms}};
                (*metrics) << j.dump() << "\n";
            }
        }
    }

    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model, cfg, *state);
    return res;
}

}  // namespace mmcaps
