#include "mmcaps/model.hpp"

#include <cmath>

#include "mmcaps/errors.hpp"
#include "mmcaps/grad_check.hpp"

namespace mmcaps {

const char* to_string(Routing r) {
    switch (r) {
        case Routing::self_attention: return "self_attention";
        case Routing::dynamic: return "dynamic";
        case Routing::em: return "em";
        case Routing::set_transformer: return "set_transformer";
        case Routing::none: return "none";
    }
    return "?";
}

const char* to_string(Modality m) {
    switch (m) {
        case Modality::video: return "video";
        case Modality::audio: return "audio";
        case Modality::text: return "text";
    }
    return "?";
}

Routing routing_from_string(const std::string& s) {
    for (Routing r : {Routing::self_attention, Routing::dynamic, Routing::em,
                      Routing::set_transformer, Routing::none})
        if (s == to_string(r)) return r;
    throw ConfigError("routing: unknown kind \"" + s + "\"");
}

Modality modality_from_string(const std::string& s) {
    for (Modality m : kModalities)
        if (s == to_string(m)) return m;
    throw ConfigError("modality: unknown name \"" + s + "\"");
}

std::size_t ModelConfig::input_dim(Modality m) const {
    switch (m) {
        case Modality::video: return video_dim;
        case Modality::audio: return audio_dim;
        case Modality::text: return text_dim;
    }
    return 0;
}

namespace {

bool perfect_square(std::size_t n) {
    auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    return r * r == n;
}

// Requirements without which the parameter shapes are not even well formed.
// Config-level minimums (capsules >= 2, ...) are checked in validate().
void check_structural(const ModelConfig& c) {
    if (c.capsules < 1) throw ConfigError("capsules: must be >= 1");
    if (c.d1 < 1) throw ConfigError("d1: must be >= 1");
    if (c.d2 < 1) throw ConfigError("d2: must be >= 1");
    if (c.embed_dim < 1) throw ConfigError("embed_dim: must be >= 1");
    if (c.heads < 1) throw ConfigError("heads: must be >= 1");
    if (c.hidden_mlp < 1) throw ConfigError("hidden_mlp: must be >= 1");
    if (c.d2 % c.heads != 0)
        throw ConfigError("heads: d2 (" + std::to_string(c.d2) + ") not divisible by heads (" +
                          std::to_string(c.heads) + ")");
    if (c.dropout_p < 0.0 || c.dropout_p >= 1.0)
        throw ConfigError("dropout_p: must be in [0,1)");
    if (c.routing_iters < 1) throw ConfigError("routing_iters: must be >= 1");
    if (c.routing == Routing::em) {
        if (c.d1 != c.d2) throw ConfigError("d1: em routing needs d1 == d2");
        if (!perfect_square(c.d1)) throw ConfigError("d1: em routing needs a perfect square");
    }
    if (c.video_dim < 1) throw ConfigError("video_dim: must be >= 1");
    if (c.audio_dim < 1) throw ConfigError("audio_dim: must be >= 1");
    if (c.text_dim < 1) throw ConfigError("text_dim: must be >= 1");
}

}  // namespace

void ModelConfig::validate() const {
    check_structural(*this);
    if (capsules < 2) throw ConfigError("capsules: must be >= 2");
}

Var multihead_attention(Tape& t, Var q, Var k, Var v, std::size_t heads, double scale,
                        std::vector<Tensor>* attention_out) {
    std::size_t d2 = t.val(q).cols();
    if (d2 % heads != 0)
        throw ShapeError("multihead_attention: " + std::to_string(d2) + " columns vs " +
                         std::to_string(heads) + " heads");
    std::size_t dh = d2 / heads;
    std::vector<Var> parts;
    parts.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = t.slice_cols(q, h * dh, dh);
        Var kh = t.slice_cols(k, h * dh, dh);
        Var vh = t.slice_cols(v, h * dh, dh);
        Var attn = t.softmax_rows(t.scale(t.matmul_nt(qh, kh), scale));
        if (attention_out) attention_out->push_back(t.val(attn));
        parts.push_back(t.matmul(attn, vh));
    }
    return t.hstack(parts);
}

void add_attention_mlp_params(ParamSet& params, const std::string& prefix, std::size_t d2,
                              std::size_t hidden, Rng& rng) {
    params.add(prefix + "block.norm1.gamma", Tensor::full(1, d2, 1.0));
    params.add(prefix + "block.norm1.beta", Tensor(1, d2));
    params.add(prefix + "block.fc1.w", glorot_uniform(d2, hidden, rng));
    params.add(prefix + "block.fc1.b", Tensor(1, hidden));
    params.add(prefix + "block.fc2.w", glorot_uniform(hidden, d2, rng));
    params.add(prefix + "block.fc2.b", Tensor(1, d2));
    params.add(prefix + "block.norm2.gamma", Tensor::full(1, d2, 1.0));
    params.add(prefix + "block.norm2.beta", Tensor(1, d2));
}

Var attention_mlp_block(Tape& t, ParamSet& params, const std::string& prefix, Var vprime,
                        double dropout_p, Mode mode, Rng& rng) {
    Var n = t.layer_norm(vprime, t.watch(params.get(prefix + "block.norm1.gamma")),
                         t.watch(params.get(prefix + "block.norm1.beta")));
    Var h = t.relu(t.linear(n, t.watch(params.get(prefix + "block.fc1.w")),
                            t.watch(params.get(prefix + "block.fc1.b"))));
    Var hd = t.dropout(h, dropout_p, mode, rng);
    Var m = t.linear(hd, t.watch(params.get(prefix + "block.fc2.w")),
                     t.watch(params.get(prefix + "block.fc2.b")));
    Var res = t.add(vprime, m);
    return t.layer_norm(res, t.watch(params.get(prefix + "block.norm2.gamma")),
                        t.watch(params.get(prefix + "block.norm2.beta")));
}

Var capsule_activation_head(Tape& t, ParamSet& params, const std::string& prefix, Var poses) {
    std::size_t c = t.val(poses).rows();
    // The scalar logit bias shifts every capsule equally, and the softmax is
    // shift-invariant, so it can never change the output; leaving it off the
    // tape keeps its gradient exactly zero instead of numerical noise.
    Var logits = t.matmul(poses, t.watch(params.get(prefix + "head.w")));
    Var sm = t.softmax_rows(t.reshape(logits, 1, c));
    return t.reshape(sm, c, 1);
}

CapsuleModel::CapsuleModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    check_structural(cfg_);
    Rng rng = Rng(seed).split(0);
    build_params(rng);
}

std::string CapsuleModel::post_prefix(Modality m) const {
    return cfg_.share_weights ? std::string("post.") : "post." + std::string(to_string(m)) + ".";
}

void CapsuleModel::add_post_block(const std::string& p, Rng& rng) {
    std::size_t c = cfg_.capsules, d1 = cfg_.d1, d2 = cfg_.d2;
    switch (cfg_.routing) {
        case Routing::self_attention:
            params.add(p + "attn.q.w", glorot_uniform(d1, d2, rng));
            params.add(p + "attn.q.b", Tensor(1, d2));
            params.add(p + "attn.k.w", glorot_uniform(d1, d2, rng));
            params.add(p + "attn.k.b", Tensor(1, d2));
            params.add(p + "attn.v.w", glorot_uniform(d1, d2, rng));
            params.add(p + "attn.v.b", Tensor(1, d2));
            add_attention_mlp_params(params, p, d2, cfg_.hidden_mlp, rng);
            params.add(p + "head.w", glorot_uniform(d2, 1, rng));
            params.add(p + "head.b", Tensor(1, 1));
            break;
        case Routing::dynamic:
            params.add(p + "dyn.w", glorot_uniform(c * c, d1 * d2, d1, d2, rng));
            break;
        case Routing::em: {
            auto k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d1))));
            params.add(p + "em.w", glorot_uniform(c * c, d2, k, k, rng));
        }
            params.add(p + "em.beta_a", Tensor(1, 1));
            params.add(p + "em.beta_u", Tensor(1, 1));
            break;
        case Routing::set_transformer:
            params.add(p + "st.seeds", glorot_uniform(c, d2, d2, d2, rng));
            params.add(p + "st.k.w", glorot_uniform(d1, d2, rng));
            params.add(p + "st.k.b", Tensor(1, d2));
            params.add(p + "st.v.w", glorot_uniform(d1, d2, rng));
            params.add(p + "st.v.b", Tensor(1, d2));
            add_attention_mlp_params(params, p, d2, cfg_.hidden_mlp, rng);
            params.add(p + "head.w", glorot_uniform(d2, 1, rng));
            params.add(p + "head.b", Tensor(1, 1));
            break;
        case Routing::none:
            params.add(p + "mlp.fc1.w", glorot_uniform(d1, cfg_.hidden_mlp, rng));
            params.add(p + "mlp.fc1.b", Tensor(1, cfg_.hidden_mlp));
            params.add(p + "mlp.fc2.w", glorot_uniform(cfg_.hidden_mlp, d2, rng));
            params.add(p + "mlp.fc2.b", Tensor(1, d2));
            params.add(p + "head.w", glorot_uniform(d2, 1, rng));
            params.add(p + "head.b", Tensor(1, 1));
            break;
    }
    params.add(p + "out.w", glorot_uniform(c * d2, cfg_.embed_dim, rng));
    params.add(p + "out.b", Tensor(1, cfg_.embed_dim));
}

void CapsuleModel::build_params(Rng& rng) {
    for (Modality m : kModalities) {
        std::string p = "primary." + std::string(to_string(m)) + ".";
        std::size_t in = cfg_.input_dim(m);
        params.add(p + "pose.w", glorot_uniform(in, cfg_.capsules * cfg_.d1, rng));
        params.add(p + "pose.b", Tensor(1, cfg_.capsules * cfg_.d1));
        params.add(p + "act.w", glorot_uniform(in, cfg_.capsules, rng));
        params.add(p + "act.b", Tensor(1, cfg_.capsules));
    }
    if (cfg_.share_weights) {
        add_post_block("post.", rng);
    } else {
        for (Modality m : kModalities)
            add_post_block("post." + std::string(to_string(m)) + ".", rng);
    }
}

CapsuleVars CapsuleModel::extract_primary_capsules(Tape& t, const std::vector<double>& feat,
                                                   Modality m) {
    std::size_t in = cfg_.input_dim(m);
    if (feat.size() != in)
        throw ShapeError("extract_primary_capsules: " + std::string(to_string(m)) + " feature 1x" +
                         std::to_string(feat.size()) + " vs expected 1x" + std::to_string(in));
    Tensor x(1, in);
    for (std::size_t i = 0; i < in; ++i) x(0, i) = feat[i];
    std::string p = "primary." + std::string(to_string(m)) + ".";
    Var xv = t.leaf(std::move(x));
    Var pose_flat = t.linear(xv, t.watch(params.get(p + "pose.w")), t.watch(params.get(p + "pose.b")));
    Var poses = t.reshape(pose_flat, cfg_.capsules, cfg_.d1);
    Var act_logits = t.linear(xv, t.watch(params.get(p + "act.w")), t.watch(params.get(p + "act.b")));
    Var acts = t.reshape(t.sigmoid(act_logits), cfg_.capsules, 1);
    return {poses, acts};
}

CapsuleVars CapsuleModel::route(Tape& t, const CapsuleVars& caps, Modality m, Mode mode, Rng& rng,
                                RoutingDiagnostics* diag) {
    const Tensor& poses = t.val(caps.poses);
    const Tensor& acts = t.val(caps.activations);
    if (poses.rows() != cfg_.capsules || poses.cols() != cfg_.d1)
        throw ShapeError("route: poses " + poses.shape_str() + " vs expected " +
                         std::to_string(cfg_.capsules) + "x" + std::to_string(cfg_.d1));
    if (acts.rows() != cfg_.capsules || acts.cols() != 1)
        throw ShapeError("route: activations " + acts.shape_str() + " vs expected " +
                         std::to_string(cfg_.capsules) + "x1");
    std::string p = post_prefix(m);
    switch (cfg_.routing) {
        case Routing::self_attention: return route_self_attention(t, caps, p, mode, rng, diag);
        case Routing::dynamic: return route_dynamic(t, caps, p, diag);
        case Routing::em: return route_em(t, caps, p, diag);
        case Routing::set_transformer: return route_set_transformer(t, caps, p, mode, rng, diag);
        case Routing::none: return route_none(t, caps, p, diag);
    }
    throw ConfigError("routing: unknown kind");
}

CapsuleVars CapsuleModel::route_self_attention(Tape& t, const CapsuleVars& caps,
                                               const std::string& p, Mode mode, Rng& rng,
                                               RoutingDiagnostics* diag) {
    Var r = t.row_scale(caps.poses, caps.activations);
    if (diag) diag->routing_input = t.val(r);
    Var q = t.linear(r, t.watch(params.get(p + "attn.q.w")), t.watch(params.get(p + "attn.q.b")));
    // A key bias adds q_i.b to every logit of row i, which the row softmax
    // cancels, so it stays off the tape (same reasoning as the head bias).
    Var k = t.matmul(r, t.watch(params.get(p + "attn.k.w")));
    Var v = t.linear(r, t.watch(params.get(p + "attn.v.w")), t.watch(params.get(p + "attn.v.b")));
    // scaled by 1/sqrt(d2) regardless of the per-head width
    double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d2));
    Var vp = multihead_attention(t, q, k, v, cfg_.heads, scale, diag ? &diag->attention : nullptr);
    if (diag) diag->attended = t.val(vp);
    Var xhat = attention_mlp_block(t, params, p, vp, cfg_.dropout_p, mode, rng);
    Var acts = capsule_activation_head(t, params, p, xhat);
    return {xhat, acts};
}

CapsuleVars CapsuleModel::route_dynamic(Tape& t, const CapsuleVars& caps, const std::string& p,
                                        RoutingDiagnostics* diag) {
    std::size_t c = cfg_.capsules;
    Var r = t.row_scale(caps.poses, caps.activations);
    if (diag) diag->routing_input = t.val(r);
    Var votes = t.capsule_votes(r, t.watch(params.get(p + "dyn.w")), c);
    // coupling logits kept output-major so each row normalizes over inputs
    Var b = t.leaf(Tensor(c, c));
    Var v{};
    for (std::size_t it = 0; it < cfg_.routing_iters; ++it) {
        Var coup = t.softmax_rows(b);
        if (diag) diag->attention.push_back(t.val(coup));
        Var s = t.mix_votes(coup, votes);
        v = t.squash_rows(s);
        if (it + 1 < cfg_.routing_iters) b = t.add(b, t.vote_agreement(votes, v));
    }
    Var norms = t.row_norms(v);
    Var acts = t.reshape(t.softmax_rows(t.reshape(norms, 1, c)), c, 1);
    return {v, acts};
}

CapsuleVars CapsuleModel::route_em(Tape& t, const CapsuleVars& caps, const std::string& p,
                                   RoutingDiagnostics* diag) {
    std::size_t c = cfg_.capsules, d2 = cfg_.d2;
    auto k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cfg_.d1))));
    const Tensor& a_in_val = t.val(caps.activations);
    bool all_zero = true;
    for (std::size_t i = 0; i < a_in_val.size(); ++i)
        if (a_in_val.at(i) != 0.0) all_zero = false;
    if (all_zero) {
        // no mass to assign: zero poses, uniform activations
        Var poses = t.leaf(Tensor(c, d2));
        Var acts = t.leaf(Tensor::full(c, 1, 1.0 / static_cast<double>(c)));
        if (diag) diag->routing_input = Tensor(c, cfg_.d1);
        return {poses, acts};
    }

    constexpr double kMassFloor = 1e-12;
    constexpr double kVarFloor = 1e-8;
    constexpr double kLog2Pi = 1.8378770664093453;

    Var votes = t.matrix_capsule_votes(caps.poses, t.watch(params.get(p + "em.w")), c, k);
    Var bu = t.watch(params.get(p + "em.beta_u"));
    Var ba = t.watch(params.get(p + "em.beta_a"));
    Var assign = t.leaf(Tensor::full(c, c, 1.0 / static_cast<double>(c)));  // R, inputs x outputs
    Var mu{}, a_out{};
    for (std::size_t it = 0; it < cfg_.routing_iters; ++it) {
        double lambda = 1.0 + static_cast<double>(it);
        // M-step: activation-weighted Gaussian refit of every output capsule
        Var rp = t.row_scale(assign, caps.activations);
        Var rpt = t.transpose(rp);
        Var mass = t.row_sums(rpt);  // c x 1
        mu = t.row_div_safe(t.mix_votes(rpt, votes), mass, kMassFloor);
        Var diff = t.sub(votes, t.tile_rows(mu, c));
        Var sq = t.mul_elem(diff, diff);
        Var sigma2 = t.add_scalar(t.row_div_safe(t.mix_votes(rpt, sq), mass, kMassFloor), kVarFloor);
        Var logs = t.log_elem(sigma2);
        Var cost = t.mul_elem(
            t.add(t.row_sums(t.scale(logs, 0.5)),
                  t.tile_rows(t.scale(bu, static_cast<double>(d2)), c)),
            mass);
        a_out = t.sigmoid(t.scale(t.sub(t.tile_rows(ba, c), cost), lambda));
        if (diag) diag->attention.push_back(t.val(assign));
        // E-step: posterior assignment of inputs over output Gaussians
        if (it + 1 < cfg_.routing_iters) {
            Var quad = t.div_elem(sq, t.tile_rows(sigma2, c));
            Var inner = t.add_scalar(t.add(quad, t.tile_rows(logs, c)), kLog2Pi);
            Var logp = t.reshape(t.scale(t.row_sums(inner), -0.5), c, c);
            Var logits = t.add(logp, t.tile_rows(t.reshape(t.log_elem(a_out), 1, c), c));
            assign = t.softmax_rows(logits);
        }
    }
    Var total = t.tile_rows(t.sum_all(a_out), c);
    Var acts = t.div_elem(a_out, total);
    if (diag) diag->routing_input = t.val(caps.poses);
    return {mu, acts};
}

CapsuleVars CapsuleModel::route_set_transformer(Tape& t, const CapsuleVars& caps,
                                                const std::string& p, Mode mode, Rng& rng,
                                                RoutingDiagnostics* diag) {
    Var r = t.row_scale(caps.poses, caps.activations);
    if (diag) diag->routing_input = t.val(r);
    Var q = t.watch(params.get(p + "st.seeds"));
    // Key bias omitted from the tape: the row softmax cancels it exactly.
    Var k = t.matmul(r, t.watch(params.get(p + "st.k.w")));
    Var v = t.linear(r, t.watch(params.get(p + "st.v.w")), t.watch(params.get(p + "st.v.b")));
    double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d2));
    Var vp = multihead_attention(t, q, k, v, cfg_.heads, scale, diag ? &diag->attention : nullptr);
    if (diag) diag->attended = t.val(vp);
    Var xhat = attention_mlp_block(t, params, p, vp, cfg_.dropout_p, mode, rng);
    Var acts = capsule_activation_head(t, params, p, xhat);
    return {xhat, acts};
}

CapsuleVars CapsuleModel::route_none(Tape& t, const CapsuleVars& caps, const std::string& p,
                                     RoutingDiagnostics* diag) {
    Var r = t.row_scale(caps.poses, caps.activations);
    if (diag) diag->routing_input = t.val(r);
    Var h = t.relu(t.linear(r, t.watch(params.get(p + "mlp.fc1.w")),
                            t.watch(params.get(p + "mlp.fc1.b"))));
    Var xhat = t.linear(h, t.watch(params.get(p + "mlp.fc2.w")),
                        t.watch(params.get(p + "mlp.fc2.b")));
    Var acts = capsule_activation_head(t, params, p, xhat);
    return {xhat, acts};
}

Var CapsuleModel::project_joint(Tape& t, const CapsuleVars& caps, Modality m) {
    std::string p = post_prefix(m);
    Var weighted = t.row_scale(caps.poses, caps.activations);
    Var flat = t.reshape(weighted, 1, t.val(weighted).size());
    return t.linear(flat, t.watch(params.get(p + "out.w")), t.watch(params.get(p + "out.b")));
}

Var CapsuleModel::forward(Tape& t, const std::vector<double>& feat, Modality m, Mode mode,
                          Rng& rng, RoutingDiagnostics* diag) {
    CapsuleVars prim = extract_primary_capsules(t, feat, m);
    CapsuleVars sec = route(t, prim, m, mode, rng, diag);
    return project_joint(t, sec, m);
}

Tensor CapsuleModel::embed(const std::vector<double>& feat, Modality m) {
    Tape t;
    Rng rng(0);
    return t.val(forward(t, feat, m, Mode::eval, rng));
}

CapsuleSet CapsuleModel::secondary_capsules(const std::vector<double>& feat, Modality m,
                                            RoutingDiagnostics* diag) {
    Tape t;
    Rng rng(0);
    CapsuleVars prim = extract_primary_capsules(t, feat, m);
    CapsuleVars sec = route(t, prim, m, Mode::eval, rng, diag);
    return {t.val(sec.poses), t.val(sec.activations)};
}

FcBaseline::FcBaseline(std::size_t video_dim, std::size_t audio_dim, std::size_t text_dim,
                       std::size_t hidden, std::size_t embed_dim, std::uint64_t seed)
    : in_dims_{video_dim, audio_dim, text_dim}, hidden_(hidden), embed_dim_(embed_dim) {
    if (hidden < 1) throw ConfigError("hidden_mlp: must be >= 1");
    if (embed_dim < 1) throw ConfigError("embed_dim: must be >= 1");
    Rng rng = Rng(seed).split(0);
    for (Modality m : kModalities) {
        std::string p = "fc." + std::string(to_string(m)) + ".";
        std::size_t in = in_dims_[static_cast<std::size_t>(m)];
        if (in < 1) throw ConfigError(std::string(to_string(m)) + "_dim: must be >= 1");
        params.add(p + "fc1.w", glorot_uniform(in, hidden, rng));
        params.add(p + "fc1.b", Tensor(1, hidden));
        params.add(p + "fc2.w", glorot_uniform(hidden, embed_dim, rng));
        params.add(p + "fc2.b", Tensor(1, embed_dim));
    }
}

Var FcBaseline::forward(Tape& t, const std::vector<double>& feat, Modality m) {
    std::size_t in = in_dims_[static_cast<std::size_t>(m)];
    if (feat.size() != in)
        throw ShapeError("fc baseline: feature 1x" + std::to_string(feat.size()) +
                         " vs expected 1x" + std::to_string(in));
    Tensor x(1, in);
    for (std::size_t i = 0; i < in; ++i) x(0, i) = feat[i];
    std::string p = "fc." + std::string(to_string(m)) + ".";
    Var h = t.relu(t.linear(t.leaf(std::move(x)), t.watch(params.get(p + "fc1.w")),
                            t.watch(params.get(p + "fc1.b"))));
    return t.linear(h, t.watch(params.get(p + "fc2.w")), t.watch(params.get(p + "fc2.b")));
}

Tensor FcBaseline::embed(const std::vector<double>& feat, Modality m) {
    Tape t;
    return t.val(forward(t, feat, m));
}

PlainAttentionBaseline::PlainAttentionBaseline(std::size_t video_dim, std::size_t audio_dim,
                                               std::size_t text_dim, std::size_t n_rows,
                                               std::size_t d2, std::size_t heads,
                                               std::size_t hidden_mlp, double dropout_p,
                                               std::size_t embed_dim, std::uint64_t seed)
    : in_dims_{video_dim, audio_dim, text_dim},
      n_rows_(n_rows),
      d2_(d2),
      heads_(heads),
      hidden_mlp_(hidden_mlp),
      embed_dim_(embed_dim),
      dropout_p_(dropout_p) {
    if (n_rows < 1) throw ConfigError("attention_rows: must be >= 1");
    if (d2 % heads != 0) throw ConfigError("heads: d2 not divisible by heads");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p: must be in [0,1)");
    Rng rng = Rng(seed).split(0);
    for (Modality m : kModalities) {
        std::size_t in = in_dims_[static_cast<std::size_t>(m)];
        if (in % n_rows != 0)
            throw ConfigError(std::string(to_string(m)) + "_dim: " + std::to_string(in) +
                              " not divisible by attention_rows " + std::to_string(n_rows));
        std::size_t w = in / n_rows;
        std::string p = "pa." + std::string(to_string(m)) + ".";
        params.add(p + "attn.q.w", glorot_uniform(w, d2, rng));
        params.add(p + "attn.q.b", Tensor(1, d2));
        params.add(p + "attn.k.w", glorot_uniform(w, d2, rng));
        params.add(p + "attn.k.b", Tensor(1, d2));
        params.add(p + "attn.v.w", glorot_uniform(w, d2, rng));
        params.add(p + "attn.v.b", Tensor(1, d2));
        add_attention_mlp_params(params, p, d2, hidden_mlp, rng);
        params.add(p + "out.w", glorot_uniform(n_rows * d2, embed_dim, rng));
        params.add(p + "out.b", Tensor(1, embed_dim));
    }
}

Var PlainAttentionBaseline::forward(Tape& t, const std::vector<double>& feat, Modality m,
                                    Mode mode, Rng& rng, RoutingDiagnostics* diag) {
    std::size_t in = in_dims_[static_cast<std::size_t>(m)];
    if (feat.size() != in)
        throw ShapeError("plain attention baseline: feature 1x" + std::to_string(feat.size()) +
                         " vs expected 1x" + std::to_string(in));
    std::size_t w = in / n_rows_;
    Tensor x(n_rows_, w);
    for (std::size_t i = 0; i < in; ++i) x.at(i) = feat[i];
    std::string p = "pa." + std::string(to_string(m)) + ".";
    Var rows = t.leaf(std::move(x));
    if (diag) diag->routing_input = t.val(rows);
    Var q = t.linear(rows, t.watch(params.get(p + "attn.q.w")), t.watch(params.get(p + "attn.q.b")));
    // Key bias omitted from the tape: the row softmax cancels it exactly.
    Var k = t.matmul(rows, t.watch(params.get(p + "attn.k.w")));
    Var v = t.linear(rows, t.watch(params.get(p + "attn.v.w")), t.watch(params.get(p + "attn.v.b")));
    double scale = 1.0 / std::sqrt(static_cast<double>(d2_));
    Var vp = multihead_attention(t, q, k, v, heads_, scale, diag ? &diag->attention : nullptr);
    if (diag) diag->attended = t.val(vp);
    Var xhat = attention_mlp_block(t, params, p, vp, dropout_p_, mode, rng);
    Var flat = t.reshape(xhat, 1, n_rows_ * d2_);
    return t.linear(flat, t.watch(params.get(p + "out.w")), t.watch(params.get(p + "out.b")));
}

}  // namespace mmcaps
