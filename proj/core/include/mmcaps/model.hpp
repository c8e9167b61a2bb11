#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mmcaps/autodiff.hpp"

namespace mmcaps {

enum class Routing { self_attention, dynamic, em, set_transformer, none };
enum class Modality { video, audio, text };

inline constexpr std::array<Modality, 3> kModalities{Modality::video, Modality::audio,
                                                     Modality::text};

const char* to_string(Routing r);
const char* to_string(Modality m);
Routing routing_from_string(const std::string& s);
Modality modality_from_string(const std::string& s);

struct ModelConfig {
    Routing routing = Routing::self_attention;
    std::size_t capsules = 128;     // C, secondary == primary count
    std::size_t d1 = 32;            // primary pose dim
    std::size_t d2 = 256;           // secondary pose dim
    std::size_t embed_dim = 4096;   // joint space D
    std::size_t heads = 4;
    std::size_t hidden_mlp = 1024;
    double dropout_p = 0.1;
    std::size_t routing_iters = 3;  // dynamic and em only
    bool share_weights = true;
    std::size_t video_dim = 4096;
    std::size_t audio_dim = 1024;
    std::size_t text_dim = 300;

    std::size_t input_dim(Modality m) const;
    // Full config-level validation; throws ConfigError naming the field.
    void validate() const;
};

// Plain capsule values for inspection; activations are capsules x 1.
struct CapsuleSet {
    Tensor poses;
    Tensor activations;
};

struct CapsuleVars {
    Var poses;
    Var activations;
};

struct RoutingDiagnostics {
    Tensor routing_input;           // activation-scaled rows fed to the router
    std::vector<Tensor> attention;  // per-head attention matrices
    Tensor attended;                // multi-head output before the norm/MLP block
};

// Shared building blocks, also used by the plain-attention baseline.
// Per head: softmax(q_h k_h^T * scale) v_h, heads concatenated.
Var multihead_attention(Tape& t, Var q, Var k, Var v, std::size_t heads, double scale,
                        std::vector<Tensor>* attention_out = nullptr);
// norm -> fc -> relu -> dropout -> fc, residual from the input, norm again.
Var attention_mlp_block(Tape& t, ParamSet& params, const std::string& prefix, Var vprime,
                        double dropout_p, Mode mode, Rng& rng);
void add_attention_mlp_params(ParamSet& params, const std::string& prefix, std::size_t d2,
                              std::size_t hidden, Rng& rng);
// Per-capsule scalar logit, softmax across capsules; returns capsules x 1.
Var capsule_activation_head(Tape& t, ParamSet& params, const std::string& prefix, Var poses);

class CapsuleModel {
public:
    CapsuleModel(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamSet params;

    CapsuleVars extract_primary_capsules(Tape& t, const std::vector<double>& feat, Modality m);
    CapsuleVars route(Tape& t, const CapsuleVars& caps, Modality m, Mode mode, Rng& rng,
                      RoutingDiagnostics* diag = nullptr);
    Var project_joint(Tape& t, const CapsuleVars& caps, Modality m);
    Var forward(Tape& t, const std::vector<double>& feat, Modality m, Mode mode, Rng& rng,
                RoutingDiagnostics* diag = nullptr);

    // Eval-mode conveniences on a scratch tape.
    Tensor embed(const std::vector<double>& feat, Modality m);
    CapsuleSet secondary_capsules(const std::vector<double>& feat, Modality m,
                                  RoutingDiagnostics* diag = nullptr);

    // Prefix of the post-primary parameter block ("post." when shared).
    std::string post_prefix(Modality m) const;

private:
    void build_params(Rng& rng);
    void add_post_block(const std::string& prefix, Rng& rng);
    CapsuleVars route_self_attention(Tape& t, const CapsuleVars& caps, const std::string& p,
                                     Mode mode, Rng& rng, RoutingDiagnostics* diag);
    CapsuleVars route_dynamic(Tape& t, const CapsuleVars& caps, const std::string& p,
                              RoutingDiagnostics* diag);
    CapsuleVars route_em(Tape& t, const CapsuleVars& caps, const std::string& p,
                         RoutingDiagnostics* diag);
    CapsuleVars route_set_transformer(Tape& t, const CapsuleVars& caps, const std::string& p,
                                      Mode mode, Rng& rng, RoutingDiagnostics* diag);
    CapsuleVars route_none(Tape& t, const CapsuleVars& caps, const std::string& p,
                           RoutingDiagnostics* diag);

    ModelConfig cfg_;
};

// Two fully connected layers straight from the input features to the joint
// space; no capsules anywhere.
class FcBaseline {
public:
    FcBaseline(std::size_t video_dim, std::size_t audio_dim, std::size_t text_dim,
               std::size_t hidden, std::size_t embed_dim, std::uint64_t seed);
    ParamSet params;
    Var forward(Tape& t, const std::vector<double>& feat, Modality m);
    Tensor embed(const std::vector<double>& feat, Modality m);

private:
    std::array<std::size_t, 3> in_dims_;
    std::size_t hidden_, embed_dim_;
};

// Input reshaped into n_rows rows, one self-attention block over them (no
// capsule activations), then flatten and project to the joint space.
class PlainAttentionBaseline {
public:
    PlainAttentionBaseline(std::size_t video_dim, std::size_t audio_dim, std::size_t text_dim,
                           std::size_t n_rows, std::size_t d2, std::size_t heads,
                           std::size_t hidden_mlp, double dropout_p, std::size_t embed_dim,
                           std::uint64_t seed);
    ParamSet params;
    Var forward(Tape& t, const std::vector<double>& feat, Modality m, Mode mode, Rng& rng,
                RoutingDiagnostics* diag = nullptr);

private:
    std::array<std::size_t, 3> in_dims_;
    std::size_t n_rows_, d2_, heads_, hidden_mlp_, embed_dim_;
    double dropout_p_;
};

}  // namespace mmcaps
