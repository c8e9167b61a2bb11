#pragma once

#include "mmcaps/autodiff.hpp"

namespace mmcaps {

// Pairwise dot products; rows of e1 against rows of e2 -> B x B.
Var similarity_matrix(Tape& t, Var e1, Var e2);

// Masked-margin softmax loss of one modality pair, negated so a trainer
// minimizes it. For each anchor the diagonal entry (minus the margin delta)
// competes against its column and against its row; both log-ratios are
// averaged over the batch. Stabilized via log-sum-exp.
Var mms_pair_loss(Tape& t, Var similarities, double delta);

// Sum over the three modality pairs: video/audio, text/audio, video/text.
Var total_loss(Tape& t, Var emb_video, Var emb_audio, Var emb_text, double delta);

// Conveniences that run on a scratch tape.
double mms_pair_loss_value(const Tensor& similarities, double delta);
double total_loss_value(const Tensor& emb_video, const Tensor& emb_audio, const Tensor& emb_text,
                        double delta);

}  // namespace mmcaps
