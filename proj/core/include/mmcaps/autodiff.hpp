#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmcaps/rng.hpp"
#include "mmcaps/tensor.hpp"

namespace mmcaps {

enum class Mode { train, eval };

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;  // same shape, accumulated additively by Tape::backward

    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
};

// Ordered set of named parameters with stable addresses.
class ParamSet {
public:
    Parameter& add(const std::string& name, Tensor init);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t count() const { return items_.size(); }
    std::size_t total_size() const;
    Parameter& operator[](std::size_t i) { return *items_[i]; }
    const Parameter& operator[](std::size_t i) const { return *items_[i]; }

    void zero_grads();
    double grad_global_norm() const;

private:
    std::vector<std::unique_ptr<Parameter>> items_;
    std::unordered_map<std::string, Parameter*> by_name_;
};

// Handle to a value recorded on a Tape.
struct Var {
    int idx = -1;
};

// Linear record of executed primitives. Forward runs eagerly as ops are
// called; backward() replays the recorded closures in reverse execution
// order exactly once, accumulating into slot grads and finally into the
// grads of watched parameters.
class Tape {
public:
    Var leaf(Tensor value);                    // constant input
    Var watch(Parameter& p);                   // idempotent per parameter
    const Tensor& val(Var v) const { return slots_[v.idx].value; }
    Tensor& grad(Var v) { return slots_[v.idx].grad; }

    std::size_t size() const { return slots_.size(); }
    void backward(Var scalar_out);

    // primitives -----------------------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul_elem(Var a, Var b);
    Var div_elem(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);               // a * b^T
    Var transpose(Var a);
    Var linear(Var x, Var w, Var b);           // x*w + row-broadcast b
    Var relu(Var a);
    Var sigmoid(Var a);
    Var log_elem(Var a);                       // entries must be > 0
    Var softmax_rows(Var a);
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var dropout(Var a, double p, Mode mode, Rng& rng);
    Var row_scale(Var m, Var s);               // s: rows x 1
    Var row_div_safe(Var m, Var s, double floor);
    Var slice_cols(Var m, std::size_t c0, std::size_t width);
    Var hstack(const std::vector<Var>& parts);
    Var vstack(const std::vector<Var>& parts);
    Var reshape(Var a, std::size_t rows, std::size_t cols);
    Var row_sums(Var a);                       // rows x 1
    Var col_sums(Var a);                       // 1 x cols
    Var row_norms(Var a);                      // rows x 1, euclidean
    Var sum_all(Var a);                        // 1 x 1
    Var squash_rows(Var a);
    // capsule vote kernels; vote row layout is i*c_out + j
    Var capsule_votes(Var r, Var w, std::size_t c_out);
    Var matrix_capsule_votes(Var poses, Var w, std::size_t c_out, std::size_t k);
    Var mix_votes(Var coeff, Var votes);       // coeff: c_out x c_in
    Var vote_agreement(Var votes, Var v);      // -> c_out x c_in
    Var tile_rows(Var m, std::size_t times);
    Var mms_pair_loss(Var s, double delta);    // 1 x 1

private:
    struct Slot {
        Tensor value;
        Tensor grad;
        Parameter* param = nullptr;
    };

    Var push(Tensor value, Parameter* p = nullptr);
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

    std::vector<Slot> slots_;
    std::vector<std::function<void()>> ops_;
    std::unordered_map<const Parameter*, int> watched_;
};

}  // namespace mmcaps
