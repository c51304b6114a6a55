#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cpfean/errors.hpp"
#include "cpfean/param.hpp"
#include "cpfean/tensor.hpp"

namespace cpfean {

enum class Ew { Relu, Tanh, Sigmoid };

constexpr double kCosineEps = 1e-8;
constexpr double kLayerNormEps = 1e-6;

/// Reverse-mode tape. Nodes are appended in creation order, which is also
/// the topological order; the graph is rebuilt for every forward pass
/// because argmax-dependent dataflow changes per example.
///
/// A tape and the parameters it touches are confined to one thread.
template <class Real>
class Tape {
public:
    using NodeId = std::size_t;

    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad; // allocated during backward()
        std::vector<NodeId> inputs;
        std::vector<std::size_t> indices;                // argmax / gather context
        std::function<void(Tape&, const Node&)> backprop; // empty for leaves
        Parameter<Real>* param = nullptr;
    };

    std::size_t size() const { return nodes_.size(); }

    const Tensor<Real>& value(NodeId id) const { return nodes_[id].value; }
    const Tensor<Real>& grad(NodeId id) const { return nodes_[id].grad; }
    const std::vector<std::size_t>& indices(NodeId id) const { return nodes_[id].indices; }

    void reset() {
        nodes_.clear();
        param_nodes_.clear();
    }

    // ---- leaves ----

    NodeId constant(Tensor<Real> v) {
        require(!v.empty(), "tape: constant from empty tensor");
        return push(std::move(v), {}, nullptr);
    }

    /// Leaf backed by a learnable Parameter. Repeated calls with the same
    /// parameter return the same node; its gradient lands in p.grad.
    NodeId parameter(Parameter<Real>& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return it->second;
        NodeId id = push(p.value, {}, nullptr);
        nodes_[id].param = &p;
        param_nodes_.emplace(&p, id);
        return id;
    }

    // ---- arithmetic ----

    NodeId matmul(NodeId a, NodeId b) {
        const auto& A = nodes_[a].value;
        const auto& B = nodes_[b].value;
        require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
                "matmul: inner dimensions differ: " + shape_string(A.shape) + " vs " +
                    shape_string(B.shape));
        const std::size_t p = A.rows(), q = A.cols(), r = B.cols();
        Tensor<Real> y = Tensor<Real>::zeros({p, r});
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t k = 0; k < q; ++k) {
                const Real aik = A.at(i, k);
                if (aik == Real(0)) continue;
                for (std::size_t j = 0; j < r; ++j) y.at(i, j) += aik * B.at(k, j);
            }
        return push(std::move(y), {a, b}, [](Tape& t, const Node& n) {
            const auto& A = t.nodes_[n.inputs[0]].value;
            const auto& B = t.nodes_[n.inputs[1]].value;
            auto& gA = t.nodes_[n.inputs[0]].grad;
            auto& gB = t.nodes_[n.inputs[1]].grad;
            const std::size_t p = A.rows(), q = A.cols(), r = B.cols();
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < r; ++j) {
                    const Real g = n.grad.at(i, j);
                    if (g == Real(0)) continue;
                    for (std::size_t k = 0; k < q; ++k) {
                        gA.at(i, k) += g * B.at(k, j);
                        gB.at(k, j) += A.at(i, k) * g;
                    }
                }
        });
    }

    NodeId transpose(NodeId x) {
        const auto& X = nodes_[x].value;
        require(X.rank() == 2, "transpose: need rank 2, got " + shape_string(X.shape));
        Tensor<Real> y = Tensor<Real>::zeros({X.cols(), X.rows()});
        for (std::size_t i = 0; i < X.rows(); ++i)
            for (std::size_t j = 0; j < X.cols(); ++j) y.at(j, i) = X.at(i, j);
        return push(std::move(y), {x}, [](Tape& t, const Node& n) {
            auto& gX = t.nodes_[n.inputs[0]].grad;
            for (std::size_t i = 0; i < gX.rows(); ++i)
                for (std::size_t j = 0; j < gX.cols(); ++j) gX.at(i, j) += n.grad.at(j, i);
        });
    }

    NodeId add(NodeId a, NodeId b) {
        const auto& A = nodes_[a].value;
        const auto& B = nodes_[b].value;
        require(A.same_shape(B), "add: shapes differ: " + shape_string(A.shape) + " vs " +
                                     shape_string(B.shape));
        Tensor<Real> y = A;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += B[i];
        return push(std::move(y), {a, b}, [](Tape& t, const Node& n) {
            auto& gA = t.nodes_[n.inputs[0]].grad;
            auto& gB = t.nodes_[n.inputs[1]].grad;
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                gA[i] += n.grad[i];
                gB[i] += n.grad[i];
            }
        });
    }

    /// Elementwise (Hadamard) product.
    NodeId mul(NodeId a, NodeId b) {
        const auto& A = nodes_[a].value;
        const auto& B = nodes_[b].value;
        require(A.same_shape(B), "mul: shapes differ: " + shape_string(A.shape) + " vs " +
                                     shape_string(B.shape));
        Tensor<Real> y = A;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= B[i];
        return push(std::move(y), {a, b}, [](Tape& t, const Node& n) {
            const auto& A = t.nodes_[n.inputs[0]].value;
            const auto& B = t.nodes_[n.inputs[1]].value;
            auto& gA = t.nodes_[n.inputs[0]].grad;
            auto& gB = t.nodes_[n.inputs[1]].grad;
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                gA[i] += n.grad[i] * B[i];
                gB[i] += n.grad[i] * A[i];
            }
        });
    }

    /// y = scale * x + shift, elementwise with scalar constants.
    NodeId affine(NodeId x, Real scale, Real shift) {
        Tensor<Real> y = nodes_[x].value;
        for (auto& v : y.data) v = scale * v + shift;
        return push(std::move(y), {x}, [scale](Tape& t, const Node& n) {
            auto& gX = t.nodes_[n.inputs[0]].grad;
            for (std::size_t i = 0; i < n.grad.size(); ++i) gX[i] += scale * n.grad[i];
        });
    }

    NodeId scale(NodeId x, Real s) { return affine(x, s, Real(0)); }

    // ---- nonlinearities ----

    NodeId elementwise(Ew kind, NodeId x) {
        Tensor<Real> y = nodes_[x].value;
        switch (kind) {
            case Ew::Relu:
                for (auto& v : y.data) v = v > Real(0) ? v : Real(0);
                break;
            case Ew::Tanh:
                for (auto& v : y.data) v = std::tanh(v);
                break;
            case Ew::Sigmoid:
                for (auto& v : y.data) v = Real(1) / (Real(1) + std::exp(-v));
                break;
        }
        return push(std::move(y), {x}, [kind](Tape& t, const Node& n) {
            const auto& X = t.nodes_[n.inputs[0]].value;
            auto& gX = t.nodes_[n.inputs[0]].grad;
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                switch (kind) {
                    case Ew::Relu:
                        // relu'(0) = 0 by convention
                        if (X[i] > Real(0)) gX[i] += n.grad[i];
                        break;
                    case Ew::Tanh:
                        gX[i] += n.grad[i] * (Real(1) - n.value[i] * n.value[i]);
                        break;
                    case Ew::Sigmoid:
                        gX[i] += n.grad[i] * n.value[i] * (Real(1) - n.value[i]);
                        break;
                }
            }
        });
    }

    NodeId relu(NodeId x) { return elementwise(Ew::Relu, x); }
    NodeId tanh_(NodeId x) { return elementwise(Ew::Tanh, x); }
    NodeId sigmoid(NodeId x) { return elementwise(Ew::Sigmoid, x); }

    /// Per-row softmax with max subtraction; rows sum to 1.
    NodeId row_softmax(NodeId x) {
        const auto& X = nodes_[x].value;
        require(X.rank() == 2, "row_softmax: need rank 2, got " + shape_string(X.shape));
        Tensor<Real> y = X;
        for (std::size_t i = 0; i < X.rows(); ++i) {
            Real mx = X.at(i, 0);
            for (std::size_t j = 1; j < X.cols(); ++j) mx = std::max(mx, X.at(i, j));
            Real sum = 0;
            for (std::size_t j = 0; j < X.cols(); ++j) {
                y.at(i, j) = std::exp(X.at(i, j) - mx);
                sum += y.at(i, j);
            }
            for (std::size_t j = 0; j < X.cols(); ++j) y.at(i, j) /= sum;
        }
        return push(std::move(y), {x}, [](Tape& t, const Node& n) {
            auto& gX = t.nodes_[n.inputs[0]].grad;
            const auto& Y = n.value;
            for (std::size_t i = 0; i < Y.rows(); ++i) {
                Real dot = 0;
                for (std::size_t j = 0; j < Y.cols(); ++j) dot += n.grad.at(i, j) * Y.at(i, j);
                for (std::size_t j = 0; j < Y.cols(); ++j)
                    gX.at(i, j) += Y.at(i, j) * (n.grad.at(i, j) - dot);
            }
        });
    }

    /// Per-row normalization to mean 0 / variance 1 (eps-guarded) followed
    /// by the affine map gain * x_hat + bias. gain and bias have shape [d].
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, Real eps = Real(kLayerNormEps)) {
        const auto& X = nodes_[x].value;
        const auto& G = nodes_[gain].value;
        const auto& B = nodes_[bias].value;
        require(X.rank() == 2, "layer_norm: need rank 2 input, got " + shape_string(X.shape));
        require(G.rank() == 1 && G.size() == X.cols() && B.rank() == 1 && B.size() == X.cols(),
                "layer_norm: gain/bias must be [d] with d = " + std::to_string(X.cols()));
        const std::size_t p = X.rows(), d = X.cols();
        Tensor<Real> y = Tensor<Real>::zeros({p, d});
        for (std::size_t i = 0; i < p; ++i) {
            Real mean = 0;
            for (std::size_t j = 0; j < d; ++j) mean += X.at(i, j);
            mean /= Real(d);
            Real var = 0;
            for (std::size_t j = 0; j < d; ++j) {
                Real c = X.at(i, j) - mean;
                var += c * c;
            }
            var /= Real(d);
            Real inv = Real(1) / std::sqrt(var + eps);
            for (std::size_t j = 0; j < d; ++j)
                y.at(i, j) = G[j] * ((X.at(i, j) - mean) * inv) + B[j];
        }
        return push(std::move(y), {x, gain, bias}, [eps](Tape& t, const Node& n) {
            const auto& X = t.nodes_[n.inputs[0]].value;
            const auto& G = t.nodes_[n.inputs[1]].value;
            auto& gX = t.nodes_[n.inputs[0]].grad;
            auto& gG = t.nodes_[n.inputs[1]].grad;
            auto& gB = t.nodes_[n.inputs[2]].grad;
            const std::size_t p = X.rows(), d = X.cols();
            std::vector<Real> xhat(d), dxhat(d);
            for (std::size_t i = 0; i < p; ++i) {
                Real mean = 0;
                for (std::size_t j = 0; j < d; ++j) mean += X.at(i, j);
                mean /= Real(d);
                Real var = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    Real c = X.at(i, j) - mean;
                    var += c * c;
                }
                var /= Real(d);
                Real inv = Real(1) / std::sqrt(var + eps);
                Real m1 = 0, m2 = 0; // means of dxhat and dxhat*xhat
                for (std::size_t j = 0; j < d; ++j) {
                    xhat[j] = (X.at(i, j) - mean) * inv;
                    dxhat[j] = n.grad.at(i, j) * G[j];
                    gG[j] += n.grad.at(i, j) * xhat[j];
                    gB[j] += n.grad.at(i, j);
                    m1 += dxhat[j];
                    m2 += dxhat[j] * xhat[j];
                }
                m1 /= Real(d);
                m2 /= Real(d);
                for (std::size_t j = 0; j < d; ++j)
                    gX.at(i, j) += inv * (dxhat[j] - m1 - xhat[j] * m2);
            }
        });
    }

    // ---- reductions / selection ----

    /// Max along one axis of a [p x q] tensor. axis=1 reduces over columns
    /// (one value per row); axis=0 reduces over rows. First-occurrence
    /// argmax indices are saved on the node; the backward pass routes the
    /// incoming gradient only to the argmax element (max-pooling rule).
    NodeId max_over_axis(NodeId x, std::size_t axis) {
        const auto& X = nodes_[x].value;
        require(X.rank() == 2, "max_over_axis: need rank 2, got " + shape_string(X.shape));
        require(axis == 0 || axis == 1, "max_over_axis: axis must be 0 or 1");
        const std::size_t out_n = axis == 1 ? X.rows() : X.cols();
        const std::size_t in_n = axis == 1 ? X.cols() : X.rows();
        Tensor<Real> y = Tensor<Real>::zeros({out_n});
        std::vector<std::size_t> amax(out_n, 0);
        for (std::size_t i = 0; i < out_n; ++i) {
            Real best = axis == 1 ? X.at(i, 0) : X.at(0, i);
            for (std::size_t j = 1; j < in_n; ++j) {
                Real v = axis == 1 ? X.at(i, j) : X.at(j, i);
                if (v > best) {
                    best = v;
                    amax[i] = j;
                }
            }
            y[i] = best;
        }
        NodeId id = push(std::move(y), {x}, [axis](Tape& t, const Node& n) {
            auto& gX = t.nodes_[n.inputs[0]].grad;
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                if (axis == 1)
                    gX.at(i, n.indices[i]) += n.grad[i];
                else
                    gX.at(n.indices[i], i) += n.grad[i];
            }
        });
        nodes_[id].indices = std::move(amax);
        return id;
    }

    NodeId sum_all(NodeId x) {
        const auto& X = nodes_[x].value;
        Real s = 0;
        for (Real v : X.data) s += v;
        return push(Tensor<Real>({1}, {s}), {x}, [](Tape& t, const Node& n) {
            auto& gX = t.nodes_[n.inputs[0]].grad;
            for (auto& g : gX.data) g += n.grad[0];
        });
    }

    // ---- structural ----

    NodeId concat_cols(NodeId a, NodeId b) {
        const auto& A = nodes_[a].value;
        const auto& B = nodes_[b].value;
        require(A.rank() == 2 && B.rank() == 2 && A.rows() == B.rows(),
                "concat_cols: row counts differ: " + shape_string(A.shape) + " vs " +
                    shape_string(B.shape));
        const std::size_t p = A.rows(), c1 = A.cols(), c2 = B.cols();
        Tensor<Real> y = Tensor<Real>::zeros({p, c1 + c2});
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < c1; ++j) y.at(i, j) = A.at(i, j);
            for (std::size_t j = 0; j < c2; ++j) y.at(i, c1 + j) = B.at(i, j);
        }
        return push(std::move(y), {a, b}, [c1, c2](Tape& t, const Node& n) {
            auto& gA = t.nodes_[n.inputs[0]].grad;
            auto& gB = t.nodes_[n.inputs[1]].grad;
            for (std::size_t i = 0; i < gA.rows(); ++i) {
                for (std::size_t j = 0; j < c1; ++j) gA.at(i, j) += n.grad.at(i, j);
                for (std::size_t j = 0; j < c2; ++j) gB.at(i, j) += n.grad.at(i, c1 + j);
            }
        });
    }

    NodeId slice_cols(NodeId x, std::size_t start, std::size_t len) {
        const auto& X = nodes_[x].value;
        require(X.rank() == 2 && start + len <= X.cols(),
                "slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                    ") out of " + shape_string(X.shape));
        Tensor<Real> y = Tensor<Real>::zeros({X.rows(), len});
        for (std::size_t i = 0; i < X.rows(); ++i)
            for (std::size_t j = 0; j < len; ++j) y.at(i, j) = X.at(i, start + j);
        return push(std::move(y), {x}, [start, len](Tape& t, const Node& n) {
            auto& gX = t.nodes_[n.inputs[0]].grad;
            for (std::size_t i = 0; i < n.grad.rows(); ++i)
                for (std::size_t j = 0; j < len; ++j) gX.at(i, start + j) += n.grad.at(i, j);
        });
    }

    /// Row gather; duplicate indices accumulate on the backward pass.
    NodeId gather_rows(NodeId x, std::vector<std::size_t> idx) {
        const auto& X = nodes_[x].value;
        require(X.rank() == 2, "gather_rows: need rank 2, got " + shape_string(X.shape));
        require(!idx.empty(), "gather_rows: empty index list");
        for (auto i : idx)
            require(i < X.rows(), "gather_rows: index " + std::to_string(i) + " out of " +
                                      std::to_string(X.rows()) + " rows");
        Tensor<Real> y = Tensor<Real>::zeros({idx.size(), X.cols()});
        for (std::size_t t = 0; t < idx.size(); ++t)
            for (std::size_t j = 0; j < X.cols(); ++j) y.at(t, j) = X.at(idx[t], j);
        NodeId id = push(std::move(y), {x}, [](Tape& t, const Node& n) {
            auto& gX = t.nodes_[n.inputs[0]].grad;
            for (std::size_t r = 0; r < n.grad.rows(); ++r)
                for (std::size_t j = 0; j < n.grad.cols(); ++j)
                    gX.at(n.indices[r], j) += n.grad.at(r, j);
        });
        nodes_[id].indices = std::move(idx);
        return id;
    }

    /// Packs rows*cols scalar nodes (each shape [1]) into one [rows x cols]
    /// tensor, row-major.
    NodeId stack_scalars(const std::vector<NodeId>& ids, std::size_t rows, std::size_t cols) {
        require(ids.size() == rows * cols, "stack_scalars: got " + std::to_string(ids.size()) +
                                               " scalars for " + std::to_string(rows) + "x" +
                                               std::to_string(cols));
        std::vector<Real> d(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            require(nodes_[ids[i]].value.size() == 1, "stack_scalars: input " + std::to_string(i) +
                                                          " is not scalar");
            d[i] = nodes_[ids[i]].value[0];
        }
        return push(Tensor<Real>({rows, cols}, std::move(d)), ids, [](Tape& t, const Node& n) {
            for (std::size_t i = 0; i < n.inputs.size(); ++i)
                t.nodes_[n.inputs[i]].grad[0] += n.grad[i];
        });
    }

    // ---- fused domain ops ----

    /// Differentiable cosine similarity matrix, entry (i,j) =
    /// a_i . b_j / max(|a_i||b_j|, eps).
    NodeId cosine(NodeId a, NodeId b, Real eps = Real(kCosineEps)) {
        const auto& A = nodes_[a].value;
        const auto& B = nodes_[b].value;
        require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.cols(),
                "cosine: need [p x d] and [q x d], got " + shape_string(A.shape) + " vs " +
                    shape_string(B.shape));
        return push(cosine_matrix(A, B, eps), {a, b}, [eps](Tape& t, const Node& n) {
            const auto& A = t.nodes_[n.inputs[0]].value;
            const auto& B = t.nodes_[n.inputs[1]].value;
            auto& gA = t.nodes_[n.inputs[0]].grad;
            auto& gB = t.nodes_[n.inputs[1]].grad;
            const std::size_t p = A.rows(), q = B.rows(), d = A.cols();
            std::vector<Real> na(p), nb(q);
            for (std::size_t i = 0; i < p; ++i) {
                Real s = 0;
                for (std::size_t k = 0; k < d; ++k) s += A.at(i, k) * A.at(i, k);
                na[i] = std::sqrt(s);
            }
            for (std::size_t j = 0; j < q; ++j) {
                Real s = 0;
                for (std::size_t k = 0; k < d; ++k) s += B.at(j, k) * B.at(j, k);
                nb[j] = std::sqrt(s);
            }
            for (std::size_t i = 0; i < p; ++i) {
                for (std::size_t j = 0; j < q; ++j) {
                    const Real g = n.grad.at(i, j);
                    if (g == Real(0)) continue;
                    const Real den = na[i] * nb[j];
                    if (den > eps) {
                        const Real c = n.value.at(i, j);
                        for (std::size_t k = 0; k < d; ++k) {
                            gA.at(i, k) += g * (B.at(j, k) / den - c * A.at(i, k) / (na[i] * na[i]));
                            gB.at(j, k) += g * (A.at(i, k) / den - c * B.at(j, k) / (nb[j] * nb[j]));
                        }
                    } else {
                        // clamp active: denominator is the constant eps
                        for (std::size_t k = 0; k < d; ++k) {
                            gA.at(i, k) += g * B.at(j, k) / eps;
                            gB.at(j, k) += g * A.at(i, k) / eps;
                        }
                    }
                }
            }
        });
    }

    /// Bidirectional hard-negative triplet loss over a square similarity
    /// matrix whose diagonal holds the positive pairs:
    ///   sum_a [m - S_aa + max_{b!=a} S_ab]_+ + [m - S_aa + max_{c!=a} S_ca]_+
    NodeId triplet_loss_hard(NodeId s, Real margin) {
        const auto& S = nodes_[s].value;
        require(S.rank() == 2 && S.rows() == S.cols(),
                "triplet_loss_hard: need square matrix, got " + shape_string(S.shape));
        const std::size_t n = S.rows();
        Real loss = 0;
        if (n > 1) {
            for (std::size_t a = 0; a < n; ++a) {
                std::size_t br = a == 0 ? 1 : 0, bc = br;
                for (std::size_t b = 0; b < n; ++b) {
                    if (b == a) continue;
                    if (S.at(a, b) > S.at(a, br)) br = b;
                    if (S.at(b, a) > S.at(bc, a)) bc = b;
                }
                loss += std::max(Real(0), margin - S.at(a, a) + S.at(a, br));
                loss += std::max(Real(0), margin - S.at(a, a) + S.at(bc, a));
            }
        }
        return push(Tensor<Real>({1}, {loss}), {s}, [margin](Tape& t, const Node& n) {
            const auto& S = t.nodes_[n.inputs[0]].value;
            auto& gS = t.nodes_[n.inputs[0]].grad;
            const std::size_t nn = S.rows();
            if (nn <= 1) return;
            const Real g = n.grad[0];
            for (std::size_t a = 0; a < nn; ++a) {
                std::size_t br = a == 0 ? 1 : 0, bc = br;
                for (std::size_t b = 0; b < nn; ++b) {
                    if (b == a) continue;
                    if (S.at(a, b) > S.at(a, br)) br = b;
                    if (S.at(b, a) > S.at(bc, a)) bc = b;
                }
                if (margin - S.at(a, a) + S.at(a, br) > Real(0)) {
                    gS.at(a, a) -= g;
                    gS.at(a, br) += g;
                }
                if (margin - S.at(a, a) + S.at(bc, a) > Real(0)) {
                    gS.at(a, a) -= g;
                    gS.at(bc, a) += g;
                }
            }
        });
    }

    // ---- backward ----

    /// Reverse accumulation from a scalar loss node. Parameter leaves add
    /// their node gradient into Parameter::grad.
    void backward(NodeId loss) {
        require(loss < nodes_.size(), "backward: bad node id");
        if (nodes_[loss].value.size() != 1)
            throw ValidationError("backward: loss must be scalar, got " +
                                  shape_string(nodes_[loss].value.shape));
        for (std::size_t i = 0; i <= loss; ++i)
            nodes_[i].grad = Tensor<Real>::zeros(nodes_[i].value.shape);
        nodes_[loss].grad[0] = Real(1);
        for (std::size_t i = loss + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backprop) n.backprop(*this, n);
            if (n.param) {
                for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
            }
        }
    }

private:
    NodeId push(Tensor<Real> value, std::vector<NodeId> inputs,
                std::function<void(Tape&, const Node&)> backprop) {
        Node n;
        n.value = std::move(value);
        n.inputs = std::move(inputs);
        n.backprop = std::move(backprop);
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter<Real>*, NodeId> param_nodes_;
};

} // namespace cpfean
