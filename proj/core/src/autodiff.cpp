#include "mmcaps/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "mmcaps/errors.hpp"

namespace mmcaps {

Parameter& ParamSet::add(const std::string& name, Tensor init) {
    if (by_name_.count(name)) throw ConfigError("param set: duplicate name " + name);
    items_.push_back(std::make_unique<Parameter>(name, std::move(init)));
    by_name_[name] = items_.back().get();
    return *items_.back();
}

Parameter& ParamSet::get(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ConfigError("param set: no parameter named " + name);
    return *it->second;
}

const Parameter& ParamSet::get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ConfigError("param set: no parameter named " + name);
    return *it->second;
}

bool ParamSet::contains(const std::string& name) const { return by_name_.count(name) != 0; }

std::size_t ParamSet::total_size() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p->value.size();
    return n;
}

void ParamSet::zero_grads() {
    for (auto& p : items_) p->grad.fill(0.0);
}

double ParamSet::grad_global_norm() const {
    double sq = 0.0;
    for (const auto& p : items_)
        for (std::size_t i = 0; i < p->grad.size(); ++i) sq += p->grad.at(i) * p->grad.at(i);
    return std::sqrt(sq);
}

Var Tape::push(Tensor value, Parameter* p) {
    Slot s;
    s.grad = Tensor(value.rows(), value.cols());
    s.value = std::move(value);
    s.param = p;
    slots_.push_back(std::move(s));
    return Var{static_cast<int>(slots_.size()) - 1};
}

Var Tape::leaf(Tensor value) { return push(std::move(value)); }

Var Tape::watch(Parameter& p) {
    auto it = watched_.find(&p);
    if (it != watched_.end()) return Var{it->second};
    Var v = push(p.value, &p);
    watched_[&p] = v.idx;
    return v;
}

void Tape::backward(Var out) {
    Tensor& g = slots_[out.idx].grad;
    if (g.rows() != 1 || g.cols() != 1)
        throw ShapeError("backward: output must be 1x1, got " + slots_[out.idx].value.shape_str());
    g(0, 0) = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    for (auto& s : slots_)
        if (s.param) {
            Tensor& pg = s.param->grad;
            for (std::size_t i = 0; i < pg.size(); ++i) pg.at(i) += s.grad.at(i);
        }
}

Var Tape::add(Var a, Var b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    check_same_shape(x, y, "add");
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = x.at(i) + y.at(i);
    Var o = push(std::move(out));
    record([this, a, b, o] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& ga = slots_[a.idx].grad;
        Tensor& gb = slots_[b.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.at(i) += g.at(i);
            gb.at(i) += g.at(i);
        }
    });
    return o;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    check_same_shape(x, y, "sub");
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = x.at(i) - y.at(i);
    Var o = push(std::move(out));
    record([this, a, b, o] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& ga = slots_[a.idx].grad;
        Tensor& gb = slots_[b.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.at(i) += g.at(i);
            gb.at(i) -= g.at(i);
        }
    });
    return o;
}

Var Tape::mul_elem(Var a, Var b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    check_same_shape(x, y, "mul_elem");
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = x.at(i) * y.at(i);
    Var o = push(std::move(out));
    record([this, a, b, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& x = slots_[a.idx].value;
        const Tensor& y = slots_[b.idx].value;
        Tensor& ga = slots_[a.idx].grad;
        Tensor& gb = slots_[b.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.at(i) += g.at(i) * y.at(i);
            gb.at(i) += g.at(i) * x.at(i);
        }
    });
    return o;
}

Var Tape::div_elem(Var a, Var b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    check_same_shape(x, y, "div_elem");
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = x.at(i) / y.at(i);
    Var o = push(std::move(out));
    record([this, a, b, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& x = slots_[a.idx].value;
        const Tensor& y = slots_[b.idx].value;
        Tensor& ga = slots_[a.idx].grad;
        Tensor& gb = slots_[b.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.at(i) += g.at(i) / y.at(i);
            gb.at(i) -= g.at(i) * x.at(i) / (y.at(i) * y.at(i));
        }
    });
    return o;
}

Var Tape::scale(Var a, double s) {
    const Tensor& x = val(a);
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = x.at(i) * s;
    Var o = push(std::move(out));
    record([this, a, o, s] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) += g.at(i) * s;
    });
    return o;
}

Var Tape::add_scalar(Var a, double s) {
    const Tensor& x = val(a);
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = x.at(i) + s;
    Var o = push(std::move(out));
    record([this, a, o] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) += g.at(i);
    });
    return o;
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    if (x.cols() != y.rows())
        throw ShapeError("matmul: " + x.shape_str() + " vs " + y.shape_str());
    Tensor out(x.rows(), y.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t l = 0; l < x.cols(); ++l) {
            double xv = x(i, l);
            if (xv == 0.0) continue;
            const double* yr = y.row(l);
            double* orow = out.row(i);
            for (std::size_t j = 0; j < y.cols(); ++j) orow[j] += xv * yr[j];
        }
    Var o = push(std::move(out));
    record([this, a, b, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& x = slots_[a.idx].value;
        const Tensor& y = slots_[b.idx].value;
        Tensor& ga = slots_[a.idx].grad;
        Tensor& gb = slots_[b.idx].grad;
        // ga += g * y^T
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t l = 0; l < x.cols(); ++l) {
                double acc = 0.0;
                const double* gr = g.row(i);
                const double* yr = y.row(l);
                for (std::size_t j = 0; j < y.cols(); ++j) acc += gr[j] * yr[j];
                ga(i, l) += acc;
            }
        // gb += x^T * g
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t l = 0; l < x.cols(); ++l) {
                double xv = x(i, l);
                if (xv == 0.0) continue;
                const double* gr = g.row(i);
                double* gbr = gb.row(l);
                for (std::size_t j = 0; j < y.cols(); ++j) gbr[j] += xv * gr[j];
            }
    });
    return o;
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    if (x.cols() != y.cols())
        throw ShapeError("matmul_nt: " + x.shape_str() + " vs " + y.shape_str());
    Tensor out(x.rows(), y.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < y.rows(); ++j) {
            double acc = 0.0;
            const double* xr = x.row(i);
            const double* yr = y.row(j);
            for (std::size_t l = 0; l < x.cols(); ++l) acc += xr[l] * yr[l];
            out(i, j) = acc;
        }
    Var o = push(std::move(out));
    record([this, a, b, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& x = slots_[a.idx].value;
        const Tensor& y = slots_[b.idx].value;
        Tensor& ga = slots_[a.idx].grad;
        Tensor& gb = slots_[b.idx].grad;
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < y.rows(); ++j) {
                double gv = g(i, j);
                if (gv == 0.0) continue;
                const double* yr = y.row(j);
                const double* xr = x.row(i);
                double* gar = ga.row(i);
                double* gbr = gb.row(j);
                for (std::size_t l = 0; l < x.cols(); ++l) {
                    gar[l] += gv * yr[l];
                    gbr[l] += gv * xr[l];
                }
            }
    });
    return o;
}

Var Tape::transpose(Var a) {
    const Tensor& x = val(a);
    Tensor out(x.cols(), x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
    Var o = push(std::move(out));
    record([this, a, o] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
    });
    return o;
}

Var Tape::linear(Var xv, Var wv, Var bv) {
    const Tensor& x = val(xv);
    const Tensor& w = val(wv);
    const Tensor& b = val(bv);
    if (x.cols() != w.rows())
        throw ShapeError("linear: input " + x.shape_str() + " vs weight " + w.shape_str());
    if (b.rows() != 1 || b.cols() != w.cols())
        throw ShapeError("linear: bias " + b.shape_str() + " vs weight " + w.shape_str());
    Tensor out(x.rows(), w.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double* orow = out.row(i);
        for (std::size_t j = 0; j < w.cols(); ++j) orow[j] = b(0, j);
        for (std::size_t l = 0; l < x.cols(); ++l) {
            double xvv = x(i, l);
            if (xvv == 0.0) continue;
            const double* wr = w.row(l);
            for (std::size_t j = 0; j < w.cols(); ++j) orow[j] += xvv * wr[j];
        }
    }
    Var o = push(std::move(out));
    record([this, xv, wv, bv, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& x = slots_[xv.idx].value;
        const Tensor& w = slots_[wv.idx].value;
        Tensor& gx = slots_[xv.idx].grad;
        Tensor& gw = slots_[wv.idx].grad;
        Tensor& gb = slots_[bv.idx].grad;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double* gr = g.row(i);
            for (std::size_t j = 0; j < w.cols(); ++j) gb(0, j) += gr[j];
            for (std::size_t l = 0; l < x.cols(); ++l) {
                const double* wr = w.row(l);
                double acc = 0.0;
                for (std::size_t j = 0; j < w.cols(); ++j) acc += gr[j] * wr[j];
                gx(i, l) += acc;
                double xvv = x(i, l);
                if (xvv != 0.0) {
                    double* gwr = gw.row(l);
                    for (std::size_t j = 0; j < w.cols(); ++j) gwr[j] += xvv * gr[j];
                }
            }
        }
    });
    return o;
}

Var Tape::relu(Var a) {
    const Tensor& x = val(a);
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = x.at(i) > 0.0 ? x.at(i) : 0.0;
    Var o = push(std::move(out));
    record([this, a, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& x = slots_[a.idx].value;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x.at(i) > 0.0) ga.at(i) += g.at(i);
    });
    return o;
}

Var Tape::sigmoid(Var a) {
    const Tensor& x = val(a);
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = 1.0 / (1.0 + std::exp(-x.at(i)));
    Var o = push(std::move(out));
    record([this, a, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& s = slots_[o.idx].value;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) += g.at(i) * s.at(i) * (1.0 - s.at(i));
    });
    return o;
}

Var Tape::log_elem(Var a) {
    const Tensor& x = val(a);
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(x.at(i) > 0.0)) throw NumericError("log_elem: non-positive entry");
        out.at(i) = std::log(x.at(i));
    }
    Var o = push(std::move(out));
    record([this, a, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& x = slots_[a.idx].value;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) += g.at(i) / x.at(i);
    });
    return o;
}

Var Tape::softmax_rows(Var a) {
    const Tensor& x = val(a);
    if (x.cols() == 0) throw ShapeError("softmax_rows: empty rows");
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xr = x.row(i);
        double* orow = out.row(i);
        double m = xr[0];
        for (std::size_t j = 1; j < x.cols(); ++j) m = std::max(m, xr[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            orow[j] = std::exp(xr[j] - m);
            sum += orow[j];
        }
        for (std::size_t j = 0; j < x.cols(); ++j) orow[j] /= sum;
    }
    Var o = push(std::move(out));
    record([this, a, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& s = slots_[o.idx].value;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < g.rows(); ++i) {
            const double* gr = g.row(i);
            const double* sr = s.row(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) dot += gr[j] * sr[j];
            double* gar = ga.row(i);
            for (std::size_t j = 0; j < g.cols(); ++j) gar[j] += sr[j] * (gr[j] - dot);
        }
    });
    return o;
}

Var Tape::layer_norm(Var xv, Var gammav, Var betav, double eps) {
    const Tensor& x = val(xv);
    const Tensor& gamma = val(gammav);
    const Tensor& beta = val(betav);
    if (x.cols() < 2) throw ShapeError("layer_norm: needs >=2 columns, got " + x.shape_str());
    if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 || beta.cols() != x.cols())
        throw ShapeError("layer_norm: scale " + gamma.shape_str() + " shift " + beta.shape_str() +
                         " vs input " + x.shape_str());
    std::size_t c = x.cols();
    Tensor out(x.rows(), c);
    Tensor xhat(x.rows(), c);
    Tensor inv(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xr = x.row(i);
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += xr[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(c);
        double iv = 1.0 / std::sqrt(var + eps);
        inv(i, 0) = iv;
        for (std::size_t j = 0; j < c; ++j) {
            xhat(i, j) = (xr[j] - mu) * iv;
            out(i, j) = gamma(0, j) * xhat(i, j) + beta(0, j);
        }
    }
    Var o = push(std::move(out));
    record([this, xv, gammav, betav, o, xhat, inv] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& gamma = slots_[gammav.idx].value;
        Tensor& gx = slots_[xv.idx].grad;
        Tensor& gg = slots_[gammav.idx].grad;
        Tensor& gb = slots_[betav.idx].grad;
        std::size_t c = g.cols();
        for (std::size_t i = 0; i < g.rows(); ++i) {
            const double* gr = g.row(i);
            const double* hr = xhat.row(i);
            double mh = 0.0, mhx = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                double h = gr[j] * gamma(0, j);
                mh += h;
                mhx += h * hr[j];
                gg(0, j) += gr[j] * hr[j];
                gb(0, j) += gr[j];
            }
            mh /= static_cast<double>(c);
            mhx /= static_cast<double>(c);
            double iv = inv(i, 0);
            double* gxr = gx.row(i);
            for (std::size_t j = 0; j < c; ++j)
                gxr[j] += iv * (gr[j] * gamma(0, j) - mh - hr[j] * mhx);
        }
    });
    return o;
}

Var Tape::dropout(Var a, double p, Mode mode, Rng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(p));
    if (mode == Mode::eval || p == 0.0) return a;
    const Tensor& x = val(a);
    Tensor mask(x.rows(), x.cols());
    double keep = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask.at(i) = rng.next_uniform() >= p ? keep : 0.0;
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = x.at(i) * mask.at(i);
    Var o = push(std::move(out));
    record([this, a, o, mask] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) += g.at(i) * mask.at(i);
    });
    return o;
}

Var Tape::row_scale(Var mv, Var sv) {
    const Tensor& m = val(mv);
    const Tensor& s = val(sv);
    if (s.rows() != m.rows() || s.cols() != 1)
        throw ShapeError("row_scale: scales " + s.shape_str() + " vs matrix " + m.shape_str());
    Tensor out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) * s(i, 0);
    Var o = push(std::move(out));
    record([this, mv, sv, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& m = slots_[mv.idx].value;
        const Tensor& s = slots_[sv.idx].value;
        Tensor& gm = slots_[mv.idx].grad;
        Tensor& gs = slots_[sv.idx].grad;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m.cols(); ++j) {
                gm(i, j) += g(i, j) * s(i, 0);
                acc += g(i, j) * m(i, j);
            }
            gs(i, 0) += acc;
        }
    });
    return o;
}

Var Tape::row_div_safe(Var mv, Var sv, double floor) {
    const Tensor& m = val(mv);
    const Tensor& s = val(sv);
    if (s.rows() != m.rows() || s.cols() != 1)
        throw ShapeError("row_div_safe: divisors " + s.shape_str() + " vs matrix " + m.shape_str());
    Tensor out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double d = std::max(s(i, 0), floor);
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / d;
    }
    Var o = push(std::move(out));
    record([this, mv, sv, o, floor] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& m = slots_[mv.idx].value;
        const Tensor& s = slots_[sv.idx].value;
        Tensor& gm = slots_[mv.idx].grad;
        Tensor& gs = slots_[sv.idx].grad;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double d = std::max(s(i, 0), floor);
            bool live = s(i, 0) > floor;
            double acc = 0.0;
            for (std::size_t j = 0; j < m.cols(); ++j) {
                gm(i, j) += g(i, j) / d;
                acc += g(i, j) * m(i, j);
            }
            if (live) gs(i, 0) -= acc / (d * d);
        }
    });
    return o;
}

Var Tape::slice_cols(Var mv, std::size_t c0, std::size_t width) {
    const Tensor& m = val(mv);
    if (c0 + width > m.cols())
        throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c0 + width) +
                         ") out of " + m.shape_str());
    Tensor out(m.rows(), width);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < width; ++j) out(i, j) = m(i, c0 + j);
    Var o = push(std::move(out));
    record([this, mv, o, c0, width] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& gm = slots_[mv.idx].grad;
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < width; ++j) gm(i, c0 + j) += g(i, j);
    });
    return o;
}

Var Tape::hstack(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("hstack: no inputs");
    std::size_t rows = val(parts[0]).rows();
    std::size_t cols = 0;
    for (Var p : parts) {
        if (val(p).rows() != rows)
            throw ShapeError("hstack: row mismatch " + val(p).shape_str() + " vs " +
                             val(parts[0]).shape_str());
        cols += val(p).cols();
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& t = val(p);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < t.cols(); ++j) out(i, off + j) = t(i, j);
        off += t.cols();
    }
    Var o = push(std::move(out));
    std::vector<Var> ps = parts;
    record([this, ps, o] {
        const Tensor& g = slots_[o.idx].grad;
        std::size_t off = 0;
        for (Var p : ps) {
            Tensor& gp = slots_[p.idx].grad;
            for (std::size_t i = 0; i < gp.rows(); ++i)
                for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, off + j);
            off += gp.cols();
        }
    });
    return o;
}

Var Tape::vstack(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("vstack: no inputs");
    std::size_t cols = val(parts[0]).cols();
    std::size_t rows = 0;
    for (Var p : parts) {
        if (val(p).cols() != cols)
            throw ShapeError("vstack: col mismatch " + val(p).shape_str() + " vs " +
                             val(parts[0]).shape_str());
        rows += val(p).rows();
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& t = val(p);
        for (std::size_t i = 0; i < t.rows(); ++i)
            for (std::size_t j = 0; j < cols; ++j) out(off + i, j) = t(i, j);
        off += t.rows();
    }
    Var o = push(std::move(out));
    std::vector<Var> ps = parts;
    record([this, ps, o] {
        const Tensor& g = slots_[o.idx].grad;
        std::size_t off = 0;
        for (Var p : ps) {
            Tensor& gp = slots_[p.idx].grad;
            for (std::size_t i = 0; i < gp.rows(); ++i)
                for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(off + i, j);
            off += gp.rows();
        }
    });
    return o;
}

Var Tape::reshape(Var a, std::size_t rows, std::size_t cols) {
    const Tensor& x = val(a);
    if (rows * cols != x.size())
        throw ShapeError("reshape: " + x.shape_str() + " to " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    Tensor out(rows, cols);
    for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i);
    Var o = push(std::move(out));
    record([this, a, o] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) += g.at(i);
    });
    return o;
}

Var Tape::row_sums(Var a) {
    const Tensor& x = val(a);
    Tensor out(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) acc += x(i, j);
        out(i, 0) = acc;
    }
    Var o = push(std::move(out));
    record([this, a, o] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
    });
    return o;
}

Var Tape::col_sums(Var a) {
    const Tensor& x = val(a);
    Tensor out(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += x(i, j);
    Var o = push(std::move(out));
    record([this, a, o] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(0, j);
    });
    return o;
}

Var Tape::row_norms(Var a) {
    const Tensor& x = val(a);
    Tensor out(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) acc += x(i, j) * x(i, j);
        out(i, 0) = std::sqrt(acc);
    }
    Var o = push(std::move(out));
    record([this, a, o] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& x = slots_[a.idx].value;
        const Tensor& n = slots_[o.idx].value;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            if (n(i, 0) < 1e-12) continue;
            double s = g(i, 0) / n(i, 0);
            for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) += s * x(i, j);
        }
    });
    return o;
}

Var Tape::sum_all(Var a) {
    const Tensor& x = val(a);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x.at(i);
    Var o = push(Tensor::scalar(acc));
    record([this, a, o] {
        double g = slots_[o.idx].grad(0, 0);
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < ga.size(); ++i) ga.at(i) += g;
    });
    return o;
}

Var Tape::squash_rows(Var a) {
    const Tensor& x = val(a);
    Tensor out(x.rows(), x.cols());
    Tensor norms(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) acc += x(i, j) * x(i, j);
        double n = std::sqrt(acc);
        norms(i, 0) = n;
        if (n < 1e-12) continue;  // squash(0) = 0
        double f = n / (1.0 + n * n);
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = f * x(i, j);
    }
    Var o = push(std::move(out));
    record([this, a, o, norms] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& x = slots_[a.idx].value;
        Tensor& ga = slots_[a.idx].grad;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double n = norms(i, 0);
            if (n < 1e-12) continue;
            double f = n / (1.0 + n * n);
            double fp = (1.0 - n * n) / ((1.0 + n * n) * (1.0 + n * n));
            double dot = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) dot += g(i, j) * x(i, j);
            double k = fp * dot / n;
            for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) += f * g(i, j) + k * x(i, j);
        }
    });
    return o;
}

Var Tape::capsule_votes(Var rv, Var wv, std::size_t c_out) {
    const Tensor& r = val(rv);
    const Tensor& w = val(wv);
    std::size_t c_in = r.rows(), d1 = r.cols();
    if (w.rows() != c_in * c_out || w.cols() % d1 != 0)
        throw ShapeError("capsule_votes: transforms " + w.shape_str() + " vs input " + r.shape_str() +
                         " with " + std::to_string(c_out) + " outputs");
    std::size_t d2 = w.cols() / d1;
    Tensor out(c_in * c_out, d2);
    for (std::size_t i = 0; i < c_in; ++i)
        for (std::size_t j = 0; j < c_out; ++j) {
            const double* wr = w.row(i * c_out + j);
            double* orow = out.row(i * c_out + j);
            for (std::size_t a = 0; a < d1; ++a) {
                double rv2 = r(i, a);
                if (rv2 == 0.0) continue;
                const double* wb = wr + a * d2;
                for (std::size_t b = 0; b < d2; ++b) orow[b] += rv2 * wb[b];
            }
        }
    Var o = push(std::move(out));
    record([this, rv, wv, o, c_in, c_out, d1, d2] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& r = slots_[rv.idx].value;
        const Tensor& w = slots_[wv.idx].value;
        Tensor& gr = slots_[rv.idx].grad;
        Tensor& gw = slots_[wv.idx].grad;
        for (std::size_t i = 0; i < c_in; ++i)
            for (std::size_t j = 0; j < c_out; ++j) {
                std::size_t row = i * c_out + j;
                const double* grow = g.row(row);
                const double* wr = w.row(row);
                double* gwr = gw.row(row);
                for (std::size_t a = 0; a < d1; ++a) {
                    double acc = 0.0;
                    const double* wb = wr + a * d2;
                    double* gwb = gwr + a * d2;
                    double rv2 = r(i, a);
                    for (std::size_t b = 0; b < d2; ++b) {
                        acc += grow[b] * wb[b];
                        gwb[b] += rv2 * grow[b];
                    }
                    gr(i, a) += acc;
                }
            }
    });
    return o;
}

Var Tape::matrix_capsule_votes(Var pv, Var wv, std::size_t c_out, std::size_t k) {
    const Tensor& poses = val(pv);
    const Tensor& w = val(wv);
    std::size_t c_in = poses.rows();
    if (poses.cols() != k * k || w.cols() != k * k || w.rows() != c_in * c_out)
        throw ShapeError("matrix_capsule_votes: poses " + poses.shape_str() + " transforms " +
                         w.shape_str() + " with k=" + std::to_string(k));
    Tensor out(c_in * c_out, k * k);
    for (std::size_t i = 0; i < c_in; ++i)
        for (std::size_t j = 0; j < c_out; ++j) {
            const double* m = poses.row(i);
            const double* t = w.row(i * c_out + j);
            double* orow = out.row(i * c_out + j);
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t l = 0; l < k; ++l) {
                    double mv = m[a * k + l];
                    if (mv == 0.0) continue;
                    for (std::size_t b = 0; b < k; ++b) orow[a * k + b] += mv * t[l * k + b];
                }
        }
    Var o = push(std::move(out));
    record([this, pv, wv, o, c_in, c_out, k] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& poses = slots_[pv.idx].value;
        const Tensor& w = slots_[wv.idx].value;
        Tensor& gp = slots_[pv.idx].grad;
        Tensor& gw = slots_[wv.idx].grad;
        for (std::size_t i = 0; i < c_in; ++i)
            for (std::size_t j = 0; j < c_out; ++j) {
                std::size_t row = i * c_out + j;
                const double* grow = g.row(row);
                const double* m = poses.row(i);
                const double* t = w.row(row);
                double* gm = gp.row(i);
                double* gt = gw.row(row);
                for (std::size_t a = 0; a < k; ++a)
                    for (std::size_t l = 0; l < k; ++l) {
                        double acc = 0.0;
                        for (std::size_t b = 0; b < k; ++b) {
                            acc += grow[a * k + b] * t[l * k + b];
                            gt[l * k + b] += m[a * k + l] * grow[a * k + b];
                        }
                        gm[a * k + l] += acc;
                    }
            }
    });
    return o;
}

Var Tape::mix_votes(Var cv, Var votesv) {
    const Tensor& coeff = val(cv);
    const Tensor& votes = val(votesv);
    std::size_t c_out = coeff.rows(), c_in = coeff.cols();
    if (votes.rows() != c_in * c_out)
        throw ShapeError("mix_votes: coefficients " + coeff.shape_str() + " vs votes " +
                         votes.shape_str());
    std::size_t d2 = votes.cols();
    Tensor out(c_out, d2);
    for (std::size_t j = 0; j < c_out; ++j) {
        double* orow = out.row(j);
        for (std::size_t i = 0; i < c_in; ++i) {
            double cvv = coeff(j, i);
            if (cvv == 0.0) continue;
            const double* vr = votes.row(i * c_out + j);
            for (std::size_t b = 0; b < d2; ++b) orow[b] += cvv * vr[b];
        }
    }
    Var o = push(std::move(out));
    record([this, cv, votesv, o, c_in, c_out, d2] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& coeff = slots_[cv.idx].value;
        const Tensor& votes = slots_[votesv.idx].value;
        Tensor& gc = slots_[cv.idx].grad;
        Tensor& gv = slots_[votesv.idx].grad;
        for (std::size_t j = 0; j < c_out; ++j) {
            const double* grow = g.row(j);
            for (std::size_t i = 0; i < c_in; ++i) {
                const double* vr = votes.row(i * c_out + j);
                double* gvr = gv.row(i * c_out + j);
                double cvv = coeff(j, i);
                double acc = 0.0;
                for (std::size_t b = 0; b < d2; ++b) {
                    acc += grow[b] * vr[b];
                    gvr[b] += cvv * grow[b];
                }
                gc(j, i) += acc;
            }
        }
    });
    return o;
}

Var Tape::vote_agreement(Var votesv, Var vv) {
    const Tensor& votes = val(votesv);
    const Tensor& v = val(vv);
    std::size_t c_out = v.rows(), d2 = v.cols();
    if (votes.cols() != d2 || votes.rows() % c_out != 0)
        throw ShapeError("vote_agreement: votes " + votes.shape_str() + " vs capsules " +
                         v.shape_str());
    std::size_t c_in = votes.rows() / c_out;
    Tensor out(c_out, c_in);
    for (std::size_t j = 0; j < c_out; ++j)
        for (std::size_t i = 0; i < c_in; ++i) {
            const double* vr = votes.row(i * c_out + j);
            const double* cr = v.row(j);
            double acc = 0.0;
            for (std::size_t b = 0; b < d2; ++b) acc += vr[b] * cr[b];
            out(j, i) = acc;
        }
    Var o = push(std::move(out));
    record([this, votesv, vv, o, c_in, c_out, d2] {
        const Tensor& g = slots_[o.idx].grad;
        const Tensor& votes = slots_[votesv.idx].value;
        const Tensor& v = slots_[vv.idx].value;
        Tensor& gvotes = slots_[votesv.idx].grad;
        Tensor& gv = slots_[vv.idx].grad;
        for (std::size_t j = 0; j < c_out; ++j)
            for (std::size_t i = 0; i < c_in; ++i) {
                double gvv = g(j, i);
                if (gvv == 0.0) continue;
                const double* vr = votes.row(i * c_out + j);
                double* gvr = gvotes.row(i * c_out + j);
                const double* cr = v.row(j);
                double* gcr = gv.row(j);
                for (std::size_t b = 0; b < d2; ++b) {
                    gvr[b] += gvv * cr[b];
                    gcr[b] += gvv * vr[b];
                }
            }
    });
    return o;
}

Var Tape::tile_rows(Var mv, std::size_t times) {
    const Tensor& m = val(mv);
    Tensor out(m.rows() * times, m.cols());
    for (std::size_t t = 0; t < times; ++t)
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) out(t * m.rows() + i, j) = m(i, j);
    Var o = push(std::move(out));
    record([this, mv, o, times] {
        const Tensor& g = slots_[o.idx].grad;
        Tensor& gm = slots_[mv.idx].grad;
        for (std::size_t t = 0; t < times; ++t)
            for (std::size_t i = 0; i < gm.rows(); ++i)
                for (std::size_t j = 0; j < gm.cols(); ++j) gm(i, j) += g(t * gm.rows() + i, j);
    });
    return o;
}

namespace {

// log(sum exp(z)) with max subtraction; z given as callback over n entries.
double lse(const std::vector<double>& z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace

Var Tape::mms_pair_loss(Var sv, double delta) {
    const Tensor& s = val(sv);
    if (s.rows() != s.cols())
        throw ShapeError("mms_pair_loss: similarity matrix must be square, got " + s.shape_str());
    std::size_t b = s.rows();
    if (b == 0) throw ShapeError("mms_pair_loss: empty matrix");
    double acc = 0.0;
    std::vector<double> z(b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t a = 0; a < b; ++a) z[a] = a == i ? s(i, i) - delta : s(a, i);
        acc += z[i] - lse(z);
        for (std::size_t a = 0; a < b; ++a) z[a] = a == i ? s(i, i) - delta : s(i, a);
        acc += z[i] - lse(z);
    }
    double loss = -acc / static_cast<double>(b);
    Var o = push(Tensor::scalar(loss));
    record([this, sv, o, delta, b] {
        double g0 = slots_[o.idx].grad(0, 0) / static_cast<double>(b);
        const Tensor& s = slots_[sv.idx].value;
        Tensor& gs = slots_[sv.idx].grad;
        std::vector<double> z(b), p(b);
        for (std::size_t i = 0; i < b; ++i) {
            // column term of anchor i: logits over rows a
            for (std::size_t a = 0; a < b; ++a) z[a] = a == i ? s(i, i) - delta : s(a, i);
            double l = lse(z);
            for (std::size_t a = 0; a < b; ++a) p[a] = std::exp(z[a] - l);
            for (std::size_t a = 0; a < b; ++a) gs(a, i) -= g0 * ((a == i ? 1.0 : 0.0) - p[a]);
            // row term: logits over columns k
            for (std::size_t a = 0; a < b; ++a) z[a] = a == i ? s(i, i) - delta : s(i, a);
            l = lse(z);
            for (std::size_t a = 0; a < b; ++a) p[a] = std::exp(z[a] - l);
            for (std::size_t a = 0; a < b; ++a) gs(i, a) -= g0 * ((a == i ? 1.0 : 0.0) - p[a]);
        }
    });
    return o;
}

}  // namespace mmcaps
