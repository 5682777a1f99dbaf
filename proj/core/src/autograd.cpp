#include "flowedge/autograd.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "eigen_views.hpp"

namespace flowedge {

using detail::flat;
using detail::RowMat;
using detail::view;

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Graph::param(const std::string& name) {
    if (!params_) throw std::logic_error("graph has no parameter store");
    if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var{this, it->second};
    const Param& p = params_->get(name);
    Node n;
    n.value = p.value;
    n.requires_grad = track_grad_ && p.trainable;
    n.param_name = name;
    nodes_.push_back(std::move(n));
    param_nodes_.emplace(name, nodes_.size() - 1);
    return Var{this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    for (const Var& p : parents) {
        if (p.graph != this) throw std::logic_error("operand recorded on a different graph");
        n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(Var v) {
    Node& n = nodes_[v.id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

void Graph::accumulate_grad(Var v, const Tensor& delta) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
        n.grad = delta;
        n.has_grad = true;
        return;
    }
    flat(n.grad) += flat(delta);
}

Tensor Graph::grad_of(Var v) const {
    const Node& n = nodes_[v.id];
    return n.has_grad ? n.grad : Tensor(n.value.shape());
}

GradResult Graph::backward(Var loss) {
    if (loss.graph != this) throw std::logic_error("loss recorded on a different graph");
    if (nodes_[loss.id].value.size() != 1)
        throw std::invalid_argument("backward() needs a scalar loss, got shape " +
                                    shape_str(nodes_[loss.id].value.shape()));
    for (Node& n : nodes_) n.has_grad = false;
    if (nodes_[loss.id].requires_grad) {
        grad_buffer(loss)[0] = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.has_grad || !n.backward) continue;
            n.backward(*this, n.grad);
        }
    }

    GradResult out;
    if (!params_) return out;
    for (const Param& p : params_->params()) {
        if (!p.trainable) continue;
        auto it = param_nodes_.find(p.name);
        if (it != param_nodes_.end() && nodes_[it->second].has_grad) {
            out.grads.emplace(p.name, nodes_[it->second].grad);
        } else {
            out.grads.emplace(p.name, Tensor(p.value.shape()));
            out.disconnected.push_back(p.name);
        }
    }
    return out;
}

// ---- tensor helpers ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor out({a.rows(), b.cols()});
    view(out).noalias() = view(a) * view(b);
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
        throw std::invalid_argument("matmul_nt shape mismatch " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()) + "^T");
    Tensor out({a.rows(), b.rows()});
    view(out).noalias() = view(a) * view(b).transpose();
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows())
        throw std::invalid_argument("matmul_tn shape mismatch " + shape_str(a.shape()) + "^T x " +
                                    shape_str(b.shape()));
    Tensor out({a.cols(), b.cols()});
    view(out).noalias() = view(a).transpose() * view(b);
    return out;
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + " shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

}  // namespace

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    flat(out) += flat(b.value());
    return a.graph->record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& up) {
        g.accumulate_grad(a, up);
        g.accumulate_grad(b, up);
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    flat(out) -= flat(b.value());
    return a.graph->record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& up) {
        g.accumulate_grad(a, up);
        if (g.requires_grad(b)) flat(g.grad_buffer(b)) -= flat(up);
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    flat(out).array() *= flat(b.value()).array();
    return a.graph->record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& up) {
        if (g.requires_grad(a)) flat(g.grad_buffer(a)).array() += flat(up).array() * flat(b.value()).array();
        if (g.requires_grad(b)) flat(g.grad_buffer(b)).array() += flat(up).array() * flat(a.value()).array();
    });
}

Var scale(Var a, double c) {
    Tensor out = a.value();
    flat(out) *= c;
    return a.graph->record(std::move(out), {a}, [a, c](Graph& g, const Tensor& up) {
        flat(g.grad_buffer(a)) += c * flat(up);
    });
}

Var matmul(Var a, Var b) {
    return a.graph->record(matmul(a.value(), b.value()), {a, b}, [a, b](Graph& g, const Tensor& up) {
        if (g.requires_grad(a)) view(g.grad_buffer(a)).noalias() += view(up) * view(b.value()).transpose();
        if (g.requires_grad(b)) view(g.grad_buffer(b)).noalias() += view(a.value()).transpose() * view(up);
    });
}

Var matmul_nt(Var a, Var b) {
    return a.graph->record(matmul_nt(a.value(), b.value()), {a, b}, [a, b](Graph& g, const Tensor& up) {
        if (g.requires_grad(a)) view(g.grad_buffer(a)).noalias() += view(up) * view(b.value());
        if (g.requires_grad(b)) view(g.grad_buffer(b)).noalias() += view(up).transpose() * view(a.value());
    });
}

Var add_row(Var a, Var bias) {
    if (bias.value().size() != a.value().cols())
        throw std::invalid_argument("add_row bias length " + std::to_string(bias.value().size()) +
                                    " does not match " + shape_str(a.shape()));
    Tensor out = a.value();
    const std::size_t cols = out.cols();
    const double* b = bias.value().data().data();
    double* o = out.data().data();
    for (std::size_t r = 0; r < out.rows(); ++r, o += cols)
        for (std::size_t c = 0; c < cols; ++c) o[c] += b[c];
    return a.graph->record(std::move(out), {a, bias}, [a, bias](Graph& g, const Tensor& up) {
        g.accumulate_grad(a, up);
        if (g.requires_grad(bias)) flat(g.grad_buffer(bias)) += view(up).colwise().sum().transpose();
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = x.value();
    const auto rows = static_cast<Eigen::Index>(xv.rows());
    if (gain.value().size() != xv.cols() || bias.value().size() != xv.cols())
        throw std::invalid_argument("layer_norm parameter length mismatch for " + shape_str(xv.shape()));

    Tensor normed(xv.shape());
    Eigen::VectorXd inv_std(rows);
    auto X = view(xv);
    auto N = view(normed);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mu = X.row(r).mean();
        const double var = (X.row(r).array() - mu).square().mean();
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        N.row(r) = (X.row(r).array() - mu) * inv_std[r];
    }
    Tensor out = normed;
    auto O = view(out);
    for (Eigen::Index r = 0; r < rows; ++r)
        O.row(r).array() = O.row(r).array() * flat(gain.value()).transpose().array() +
                           flat(bias.value()).transpose().array();

    return x.graph->record(
        std::move(out), {x, gain, bias},
        [x, gain, bias, normed = std::move(normed), inv_std = std::move(inv_std)](Graph& g, const Tensor& up) {
            auto U = view(up);
            auto Nv = view(normed);
            if (g.requires_grad(gain))
                flat(g.grad_buffer(gain)) += (U.array() * Nv.array()).colwise().sum().transpose().matrix();
            if (g.requires_grad(bias)) flat(g.grad_buffer(bias)) += U.colwise().sum().transpose();
            if (g.requires_grad(x)) {
                auto dX = view(g.grad_buffer(x));
                const auto gvec = flat(gain.value()).transpose().array();
                for (Eigen::Index r = 0; r < U.rows(); ++r) {
                    Eigen::Array<double, 1, Eigen::Dynamic> dn = U.row(r).array() * gvec;
                    const double mean_dn = dn.mean();
                    const double mean_dn_n = (dn * Nv.row(r).array()).mean();
                    dX.row(r).array() += inv_std[r] * (dn - mean_dn - Nv.row(r).array() * mean_dn_n);
                }
            }
        });
}

namespace {

// tanh through the vectorized exp; std::tanh is scalar and dominates the MLP otherwise.
Eigen::ArrayXd gelu_tanh(const Eigen::Ref<const Eigen::ArrayXd>& x) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double c = 0.044715;
    const Eigen::ArrayXd u = (2.0 * k) * (x + c * x.cube());
    return 1.0 - 2.0 / (u.min(700.0).exp() + 1.0);
}

}  // namespace

Var gelu(Var x) {
    const auto X = flat(x.value()).array();
    Eigen::ArrayXd th = gelu_tanh(X);
    Tensor out(x.shape());
    flat(out).array() = 0.5 * X * (1.0 + th);
    return x.graph->record(std::move(out), {x}, [x, th = std::move(th)](Graph& g, const Tensor& up) {
        constexpr double k = 0.7978845608028654;
        constexpr double c = 0.044715;
        const auto X = flat(x.value()).array();
        const Eigen::ArrayXd d = 0.5 * (1.0 + th) + 0.5 * X * (1.0 - th.square()) * k * (1.0 + 3.0 * c * X.square());
        flat(g.grad_buffer(x)).array() += flat(up).array() * d;
    });
}

namespace {

template <typename Block>
void softmax_rows_inplace(Block&& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double mx = m.row(r).maxCoeff();
        m.row(r) = (m.row(r).array() - mx).exp();
        m.row(r) /= m.row(r).sum();
    }
}

}  // namespace

Var softmax_rows(Var x) {
    Tensor out = x.value();
    softmax_rows_inplace(view(out));
    Tensor probs = out;
    return x.graph->record(std::move(out), {x}, [x, probs = std::move(probs)](Graph& g, const Tensor& up) {
        auto P = view(probs);
        auto U = view(up);
        Eigen::VectorXd dots = (U.array() * P.array()).rowwise().sum();
        view(g.grad_buffer(x)).array() += P.array() * (U.colwise() - dots).array();
    });
}

Var attention(Var q, Var k, Var v, std::size_t heads) {
    require_same_shape(q, k, "attention");
    require_same_shape(q, v, "attention");
    const std::size_t d = q.value().cols();
    if (heads == 0 || d % heads != 0)
        throw std::invalid_argument("attention width " + std::to_string(d) + " not divisible by " +
                                    std::to_string(heads) + " heads");
    const auto n = static_cast<Eigen::Index>(q.value().rows());
    const auto dh = static_cast<Eigen::Index>(d / heads);
    const double s = 1.0 / std::sqrt(static_cast<double>(dh));

    auto Q = view(q.value());
    auto K = view(k.value());
    auto V = view(v.value());
    Tensor out(q.shape());
    auto O = view(out);
    std::vector<Tensor> probs;
    probs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h) * dh;
        probs.emplace_back(Shape{static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
        auto P = view(probs.back());
        P.noalias() = s * (Q.middleCols(c0, dh) * K.middleCols(c0, dh).transpose());
        softmax_rows_inplace(P);
        O.middleCols(c0, dh).noalias() = P * V.middleCols(c0, dh);
    }

    return q.graph->record(
        std::move(out), {q, k, v}, [q, k, v, probs = std::move(probs), dh, s](Graph& g, const Tensor& up) {
            auto U = view(up);
            auto Q = view(q.value());
            auto K = view(k.value());
            auto V = view(v.value());
            const bool need_q = g.requires_grad(q), need_k = g.requires_grad(k), need_v = g.requires_grad(v);
            Tensor scratch(probs.front().shape());
            auto dP = view(scratch);
            for (std::size_t h = 0; h < probs.size(); ++h) {
                const auto c0 = static_cast<Eigen::Index>(h) * dh;
                auto P = view(probs[h]);
                if (need_v) view(g.grad_buffer(v)).middleCols(c0, dh).noalias() += P.transpose() * U.middleCols(c0, dh);
                if (!need_q && !need_k) continue;
                dP.noalias() = U.middleCols(c0, dh) * V.middleCols(c0, dh).transpose();
                Eigen::VectorXd dots = (dP.array() * P.array()).rowwise().sum();
                dP.array() = P.array() * (dP.colwise() - dots).array();  // dS (pre-scale)
                if (need_q) view(g.grad_buffer(q)).middleCols(c0, dh).noalias() += s * (dP * K.middleCols(c0, dh));
                if (need_k)
                    view(g.grad_buffer(k)).middleCols(c0, dh).noalias() += s * (dP.transpose() * Q.middleCols(c0, dh));
            }
        });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
    const std::size_t cols = parts.front().value().cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        if (p.value().cols() != cols) throw std::invalid_argument("concat_rows column mismatch");
        rows += p.value().rows();
    }
    Tensor out({rows, cols});
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const auto src = p.value().data();
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset * cols));
        offset += p.value().rows();
    }
    return parts.front().graph->record(std::move(out), parts, [parts, cols](Graph& g, const Tensor& up) {
        std::size_t offset = 0;
        for (const Var& p : parts) {
            const std::size_t r = p.value().rows();
            if (g.requires_grad(p)) {
                auto dst = g.grad_buffer(p).data();
                for (std::size_t i = 0; i < r * cols; ++i) dst[i] += up[offset * cols + i];
            }
            offset += r;
        }
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    const std::size_t cols = a.value().cols();
    if (begin > end || end > a.value().rows())
        throw std::invalid_argument("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                                    ") out of range for " + shape_str(a.shape()));
    Tensor out({end - begin, cols});
    const auto src = a.value().data();
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin * cols),
              src.begin() + static_cast<std::ptrdiff_t>(end * cols), out.data().begin());
    return a.graph->record(std::move(out), {a}, [a, begin, cols](Graph& g, const Tensor& up) {
        auto dst = g.grad_buffer(a).data();
        for (std::size_t i = 0; i < up.size(); ++i) dst[begin * cols + i] += up[i];
    });
}

Var add_rows_at(Var a, Var delta, std::size_t offset) {
    const std::size_t cols = a.value().cols();
    if (delta.value().cols() != cols || offset + delta.value().rows() > a.value().rows())
        throw std::invalid_argument("add_rows_at: " + shape_str(delta.shape()) + " at row " + std::to_string(offset) +
                                    " does not fit " + shape_str(a.shape()));
    Tensor out = a.value();
    auto dst = out.data();
    const auto src = delta.value().data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[offset * cols + i] += src[i];
    return a.graph->record(std::move(out), {a, delta}, [a, delta, offset, cols](Graph& g, const Tensor& up) {
        g.accumulate_grad(a, up);
        if (g.requires_grad(delta)) {
            auto d = g.grad_buffer(delta).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[offset * cols + i];
        }
    });
}

Var reshape(Var a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return a.graph->record(std::move(out), {a}, [a](Graph& g, const Tensor& up) {
        flat(g.grad_buffer(a)) += flat(up);
    });
}

Var sum(Var a) {
    return a.graph->record(Tensor::scalar(flat(a.value()).sum()), {a}, [a](Graph& g, const Tensor& up) {
        flat(g.grad_buffer(a)).array() += up[0];
    });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    return a.graph->record(Tensor::scalar(flat(a.value()).sum() / n), {a}, [a, n](Graph& g, const Tensor& up) {
        flat(g.grad_buffer(a)).array() += up[0] / n;
    });
}

Var mse(Var a, const Tensor& target) {
    if (a.shape() != target.shape())
        throw std::invalid_argument("mse shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(target.shape()));
    const double n = static_cast<double>(target.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double r = a.value()[i] - target[i];
        acc += r * r;
    }
    return a.graph->record(Tensor::scalar(acc / n), {a}, [a, target, n](Graph& g, const Tensor& up) {
        auto dst = g.grad_buffer(a).data();
        const double c = 2.0 * up[0] / n;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * (a.value()[i] - target[i]);
    });
}

Var inject_gradient(Var x, const Tensor& g, double forward_value) {
    if (g.shape() != x.shape())
        throw std::invalid_argument("injected gradient shape " + shape_str(g.shape()) + " does not match " +
                                    shape_str(x.shape()));
    return x.graph->record(Tensor::scalar(forward_value), {x}, [x, g](Graph& graph, const Tensor& up) {
        flat(graph.grad_buffer(x)) += up[0] * flat(g);
    });
}

}  // namespace flowedge
