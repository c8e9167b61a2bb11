#include "mmcaps/loss.hpp"

#include "mmcaps/errors.hpp"

namespace mmcaps {

Var similarity_matrix(Tape& t, Var e1, Var e2) {
    const Tensor& a = t.val(e1);
    const Tensor& b = t.val(e2);
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("similarity_matrix: " + a.shape_str() + " vs " + b.shape_str());
    return t.matmul_nt(e1, e2);
}

Var mms_pair_loss(Tape& t, Var similarities, double delta) {
    return t.mms_pair_loss(similarities, delta);
}

Var total_loss(Tape& t, Var emb_video, Var emb_audio, Var emb_text, double delta) {
    Var l_va = mms_pair_loss(t, similarity_matrix(t, emb_video, emb_audio), delta);
    Var l_ta = mms_pair_loss(t, similarity_matrix(t, emb_text, emb_audio), delta);
    Var l_vt = mms_pair_loss(t, similarity_matrix(t, emb_video, emb_text), delta);
    return t.add(t.add(l_va, l_ta), l_vt);
}

double mms_pair_loss_value(const Tensor& similarities, double delta) {
    Tape t;
    return t.val(mms_pair_loss(t, t.leaf(similarities), delta))(0, 0);
}

double total_loss_value(const Tensor& emb_video, const Tensor& emb_audio, const Tensor& emb_text,
                        double delta) {
    Tape t;
    return t.val(total_loss(t, t.leaf(emb_video), t.leaf(emb_audio), t.leaf(emb_text), delta))(0, 0);
}

}  // namespace mmcaps
