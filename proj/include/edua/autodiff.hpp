#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "edua/errors.hpp"
#include "edua/sparsemax.hpp"
#include "edua/tensor.hpp"

namespace edua {

// Learnable tensor with a persistent gradient buffer. Gradients accumulate
// across backward passes until zero_grad().
struct Parameter {
  enum class Group { model, embedding };

  std::string name;
  Tensor value;
  Tensor grad;
  Group group = Group::model;

  Parameter() = default;
  Parameter(std::string n, Tensor t, Group g = Group::model)
      : name(std::move(n)), value(std::move(t)), grad(Tensor::zeros(value.shape)), group(g) {}

  void zero_grad() { grad.fill(0.0); }
};

// Reverse-mode tape. Nodes are created in topological order, so backward is
// a single reverse sweep over creation order. Graphs are built per batch and
// discarded; Parameters outlive graphs and receive gradient contributions
// through their leaf nodes.
class Graph {
 public:
  struct Node {
    Tensor val;
    Tensor grad;                // allocated lazily during backward
    bool has_grad = false;
    bool needs_grad = false;
    std::function<void(Graph&, Node&)> backward;  // empty for constants
  };

  int add_node(Tensor val, bool needs_grad, std::function<void(Graph&, Node&)> backward) {
    nodes_.push_back(Node{std::move(val), Tensor(), false, needs_grad, std::move(backward)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  Tensor& grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
      n.grad = Tensor::zeros(n.val.shape);
      n.has_grad = true;
    }
    return n.grad;
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse creation order.
  void backward(int loss_id) {
    Node& loss = node(loss_id);
    if (!loss.val.is_scalar()) throw DimensionError("backward requires a scalar loss, got " + loss.val.shape_str());
    if (!std::isfinite(loss.val[0])) throw NumericError("loss is not finite");
    grad_buffer(loss_id)[0] = 1.0;
    for (int id = loss_id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.has_grad && n.backward) n.backward(*this, n);
    }
  }

  int param_node(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    Parameter* pp = &p;
    int id = add_node(p.value, true, [pp](Graph&, Node& n) {
      for (int i = 0; i < n.grad.numel(); ++i) pp->grad[i] += n.grad[i];
    });
    param_nodes_.emplace(pp, id);
    return id;
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, int> param_nodes_;
};

// Lightweight handle to a graph node.
struct Var {
  Graph* g = nullptr;
  int id = -1;

  const Tensor& val() const { return g->node(id).val; }
  bool needs_grad() const { return g->node(id).needs_grad; }
};

namespace detail {

inline void check_same_graph(const Var& a, const Var& b) {
  if (a.g != b.g) throw DimensionError("operands belong to different graphs");
}

inline Tensor& maybe_grad(Graph& g, int id) { return g.grad_buffer(id); }

}  // namespace detail

inline Var constant(Graph& g, Tensor t) { return Var{&g, g.add_node(std::move(t), false, nullptr)}; }

inline Var leaf(Graph& g, Parameter& p) { return Var{&g, g.param_node(p)}; }

inline Var matmul(Var a, Var b) {
  detail::check_same_graph(a, b);
  Graph& g = *a.g;
  Tensor out = matmul_values(a.val(), b.val());
  const bool ng = a.needs_grad() || b.needs_grad();
  int aid = a.id, bid = b.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, bid](Graph& g, Graph::Node& n) {
    const Tensor& A = g.node(aid).val;
    const Tensor& B = g.node(bid).val;
    if (g.node(aid).needs_grad) g.grad_buffer(aid).mat().noalias() += n.grad.mat() * B.mat().transpose();
    if (g.node(bid).needs_grad) g.grad_buffer(bid).mat().noalias() += A.mat().transpose() * n.grad.mat();
  });
  return Var{&g, id};
}

inline Var add(Var a, Var b) {
  detail::check_same_graph(a, b);
  Graph& g = *a.g;
  if (!a.val().same_shape(b.val()))
    throw DimensionError("add shapes " + a.val().shape_str() + " and " + b.val().shape_str());
  Tensor out = a.val();
  for (int i = 0; i < out.numel(); ++i) out[i] += b.val()[i];
  const bool ng = a.needs_grad() || b.needs_grad();
  int aid = a.id, bid = b.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, bid](Graph& g, Graph::Node& n) {
    for (int which : {aid, bid}) {
      if (!g.node(which).needs_grad) continue;
      Tensor& dst = g.grad_buffer(which);
      for (int i = 0; i < dst.numel(); ++i) dst[i] += n.grad[i];
    }
  });
  return Var{&g, id};
}

// Broadcast a row vector over every row of a matrix (bias add).
inline Var add_rowvec(Var a, Var v) {
  detail::check_same_graph(a, v);
  Graph& g = *a.g;
  const int rows = a.val().rows(), cols = a.val().cols();
  if (v.val().numel() != cols)
    throw DimensionError("row-vector add " + a.val().shape_str() + " with " + v.val().shape_str());
  Tensor out = a.val();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) += v.val()[c];
  const bool ng = a.needs_grad() || v.needs_grad();
  int aid = a.id, vid = v.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, vid, rows, cols](Graph& g, Graph::Node& n) {
    if (g.node(aid).needs_grad) {
      Tensor& da = g.grad_buffer(aid);
      for (int i = 0; i < da.numel(); ++i) da[i] += n.grad[i];
    }
    if (g.node(vid).needs_grad) {
      Tensor& dv = g.grad_buffer(vid);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) dv[c] += n.grad.at(r, c);
    }
  });
  return Var{&g, id};
}

inline Var mul(Var a, Var b) {
  detail::check_same_graph(a, b);
  Graph& g = *a.g;
  if (!a.val().same_shape(b.val()))
    throw DimensionError("mul shapes " + a.val().shape_str() + " and " + b.val().shape_str());
  Tensor out = a.val();
  for (int i = 0; i < out.numel(); ++i) out[i] *= b.val()[i];
  const bool ng = a.needs_grad() || b.needs_grad();
  int aid = a.id, bid = b.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, bid](Graph& g, Graph::Node& n) {
    const Tensor& A = g.node(aid).val;
    const Tensor& B = g.node(bid).val;
    if (g.node(aid).needs_grad) {
      Tensor& da = g.grad_buffer(aid);
      for (int i = 0; i < da.numel(); ++i) da[i] += n.grad[i] * B[i];
    }
    if (g.node(bid).needs_grad) {
      Tensor& db = g.grad_buffer(bid);
      for (int i = 0; i < db.numel(); ++i) db[i] += n.grad[i] * A[i];
    }
  });
  return Var{&g, id};
}

// Elementwise alpha*x + beta.
inline Var affine(Var a, double alpha, double beta) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& x : out.v) x = alpha * x + beta;
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, alpha](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (int i = 0; i < da.numel(); ++i) da[i] += alpha * n.grad[i];
  });
  return Var{&g, id};
}

inline Var scale(Var a, double alpha) { return affine(a, alpha, 0.0); }

inline Var tanh_op(Var a) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& x : out.v) x = std::tanh(x);
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (int i = 0; i < da.numel(); ++i) da[i] += n.grad[i] * (1.0 - n.val[i] * n.val[i]);
  });
  return Var{&g, id};
}

inline Var sigmoid_op(Var a) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& x : out.v) x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (int i = 0; i < da.numel(); ++i) da[i] += n.grad[i] * n.val[i] * (1.0 - n.val[i]);
  });
  return Var{&g, id};
}

inline Var log_op(Var a) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& x : out.v) x = std::log(x);
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid](Graph& g, Graph::Node& n) {
    const Tensor& A = g.node(aid).val;
    Tensor& da = g.grad_buffer(aid);
    for (int i = 0; i < da.numel(); ++i) da[i] += n.grad[i] / A[i];
  });
  return Var{&g, id};
}

inline Var concat_cols(Var a, Var b) {
  detail::check_same_graph(a, b);
  Graph& g = *a.g;
  const int rows = a.val().rows();
  if (b.val().rows() != rows)
    throw DimensionError("concat rows " + a.val().shape_str() + " and " + b.val().shape_str());
  const int ca = a.val().cols(), cb = b.val().cols();
  Tensor out({rows, ca + cb});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < ca; ++c) out.at(r, c) = a.val().at(r, c);
    for (int c = 0; c < cb; ++c) out.at(r, ca + c) = b.val().at(r, c);
  }
  const bool ng = a.needs_grad() || b.needs_grad();
  int aid = a.id, bid = b.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, bid, rows, ca, cb](Graph& g, Graph::Node& n) {
    if (g.node(aid).needs_grad) {
      Tensor& da = g.grad_buffer(aid);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < ca; ++c) da.at(r, c) += n.grad.at(r, c);
    }
    if (g.node(bid).needs_grad) {
      Tensor& db = g.grad_buffer(bid);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cb; ++c) db.at(r, c) += n.grad.at(r, ca + c);
    }
  });
  return Var{&g, id};
}

// Stack T column vectors [R x 1] into an [R x T] matrix.
inline Var stack_cols(const std::vector<Var>& cols) {
  if (cols.empty()) throw DimensionError("stack_cols of zero columns");
  Graph& g = *cols[0].g;
  const int rows = cols[0].val().rows();
  const int T = static_cast<int>(cols.size());
  Tensor out({rows, T});
  bool ng = false;
  std::vector<int> ids(cols.size());
  for (int t = 0; t < T; ++t) {
    if (cols[t].val().numel() != rows) throw DimensionError("stack_cols column size mismatch");
    for (int r = 0; r < rows; ++r) out.at(r, t) = cols[t].val()[r];
    ng = ng || cols[t].needs_grad();
    ids[static_cast<std::size_t>(t)] = cols[t].id;
  }
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [ids, rows](Graph& g, Graph::Node& n) {
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (!g.node(ids[t]).needs_grad) continue;
      Tensor& d = g.grad_buffer(ids[t]);
      for (int r = 0; r < rows; ++r) d[r] += n.grad.at(r, static_cast<int>(t));
    }
  });
  return Var{&g, id};
}

// Gather rows of a parameter table by index; backward scatter-adds straight
// into the parameter gradient (avoids materializing a full-table leaf).
inline Var gather_param_rows(Graph& g, Parameter& table, std::vector<int> idx) {
  const int d = table.value.cols();
  const int m = static_cast<int>(idx.size());
  Tensor out({m, d});
  for (int i = 0; i < m; ++i) {
    if (idx[static_cast<std::size_t>(i)] < 0 || idx[static_cast<std::size_t>(i)] >= table.value.rows())
      throw DimensionError("gather index out of range for " + table.name);
    for (int c = 0; c < d; ++c) out.at(i, c) = table.value.at(idx[static_cast<std::size_t>(i)], c);
  }
  Parameter* tp = &table;
  int id = g.add_node(std::move(out), true, [tp, idx = std::move(idx), d](Graph&, Graph::Node& n) {
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int c = 0; c < d; ++c) tp->grad.at(idx[i], c) += n.grad.at(static_cast<int>(i), c);
  });
  return Var{&g, id};
}

// Gather rows of an in-graph matrix.
inline Var select_rows(Var a, std::vector<int> idx) {
  Graph& g = *a.g;
  const int d = a.val().cols();
  Tensor out({static_cast<int>(idx.size()), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.val().rows()) throw DimensionError("row index out of range");
    for (int c = 0; c < d; ++c) out.at(static_cast<int>(i), c) = a.val().at(idx[i], c);
  }
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, idx = std::move(idx), d](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int c = 0; c < d; ++c) da.at(idx[i], c) += n.grad.at(static_cast<int>(i), c);
  });
  return Var{&g, id};
}

// Cross product of row sets: out[e*K + k] = a[e] + b[k]. Used to fuse
// per-word features with per-aspect features in one shot.
inline Var pairwise_row_add(Var a, Var b) {
  detail::check_same_graph(a, b);
  Graph& g = *a.g;
  const int E = a.val().rows(), K = b.val().rows(), d = a.val().cols();
  if (b.val().cols() != d)
    throw DimensionError("pairwise add widths " + a.val().shape_str() + " and " + b.val().shape_str());
  Tensor out({E * K, d});
  for (int e = 0; e < E; ++e)
    for (int k = 0; k < K; ++k)
      for (int c = 0; c < d; ++c) out.at(e * K + k, c) = a.val().at(e, c) + b.val().at(k, c);
  const bool ng = a.needs_grad() || b.needs_grad();
  int aid = a.id, bid = b.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, bid, E, K, d](Graph& g, Graph::Node& n) {
    if (g.node(aid).needs_grad) {
      Tensor& da = g.grad_buffer(aid);
      for (int e = 0; e < E; ++e)
        for (int k = 0; k < K; ++k)
          for (int c = 0; c < d; ++c) da.at(e, c) += n.grad.at(e * K + k, c);
    }
    if (g.node(bid).needs_grad) {
      Tensor& db = g.grad_buffer(bid);
      for (int e = 0; e < E; ++e)
        for (int k = 0; k < K; ++k)
          for (int c = 0; c < d; ++c) db.at(k, c) += n.grad.at(e * K + k, c);
    }
  });
  return Var{&g, id};
}

// Scale row r by the constant s[r]; the scale carries no gradient.
inline Var rowscale_const(Var a, std::vector<double> s) {
  Graph& g = *a.g;
  const int rows = a.val().rows(), cols = a.val().cols();
  if (static_cast<int>(s.size()) != rows) throw DimensionError("rowscale size mismatch");
  Tensor out = a.val();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) *= s[static_cast<std::size_t>(r)];
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, s = std::move(s), rows, cols](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) da.at(r, c) += n.grad.at(r, c) * s[static_cast<std::size_t>(r)];
  });
  return Var{&g, id};
}

inline Var transpose(Var a) {
  Graph& g = *a.g;
  const int rows = a.val().rows(), cols = a.val().cols();
  Tensor out({cols, rows});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(c, r) = a.val().at(r, c);
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, rows, cols](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) da.at(r, c) += n.grad.at(c, r);
  });
  return Var{&g, id};
}

inline Var sum(Var a) {
  Graph& g = *a.g;
  double s = 0.0;
  for (double x : a.val().v) s += x;
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(Tensor::scalar(s), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (int i = 0; i < da.numel(); ++i) da[i] += n.grad[0];
  });
  return Var{&g, id};
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / a.val().numel()); }

inline Var sum_squares(Var a) {
  Graph& g = *a.g;
  double s = 0.0;
  for (double x : a.val().v) s += x * x;
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(Tensor::scalar(s), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid](Graph& g, Graph::Node& n) {
    const Tensor& A = g.node(aid).val;
    Tensor& da = g.grad_buffer(aid);
    for (int i = 0; i < da.numel(); ++i) da[i] += 2.0 * n.grad[0] * A[i];
  });
  return Var{&g, id};
}

// Frobenius norm, with the zero subgradient at the origin.
inline Var frobenius_norm(Var a) {
  Graph& g = *a.g;
  double s = 0.0;
  for (double x : a.val().v) s += x * x;
  const double norm = std::sqrt(s);
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(Tensor::scalar(norm), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid](Graph& g, Graph::Node& n) {
    if (n.val[0] < 1e-12) return;
    const Tensor& A = g.node(aid).val;
    Tensor& da = g.grad_buffer(aid);
    for (int i = 0; i < da.numel(); ++i) da[i] += n.grad[0] * A[i] / n.val[0];
  });
  return Var{&g, id};
}

// Row-wise max-subtracted softmax.
inline Var softmax_rows(Var a) {
  Graph& g = *a.g;
  const int rows = a.val().rows(), cols = a.val().cols();
  Tensor out = a.val();
  for (int r = 0; r < rows; ++r) {
    double m = out.at(r, 0);
    for (int c = 1; c < cols; ++c) m = std::max(m, out.at(r, c));
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      out.at(r, c) = std::exp(out.at(r, c) - m);
      s += out.at(r, c);
    }
    for (int c = 0; c < cols; ++c) out.at(r, c) /= s;
  }
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, rows, cols](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (int r = 0; r < rows; ++r) {
      double inner = 0.0;
      for (int c = 0; c < cols; ++c) inner += n.grad.at(r, c) * n.val.at(r, c);
      for (int c = 0; c < cols; ++c) da.at(r, c) += n.val.at(r, c) * (n.grad.at(r, c) - inner);
    }
  });
  return Var{&g, id};
}

// Mean softmax cross-entropy over rows against integer class labels.
inline Var cross_entropy_mean(Var logits, std::vector<int> labels) {
  Graph& g = *logits.g;
  const int rows = logits.val().rows(), cols = logits.val().cols();
  if (static_cast<int>(labels.size()) != rows) throw DimensionError("label count mismatch");
  Tensor probs = logits.val();
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    double m = probs.at(r, 0);
    for (int c = 1; c < cols; ++c) m = std::max(m, probs.at(r, c));
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      probs.at(r, c) = std::exp(probs.at(r, c) - m);
      s += probs.at(r, c);
    }
    for (int c = 0; c < cols; ++c) probs.at(r, c) /= s;
    loss -= std::log(probs.at(r, labels[static_cast<std::size_t>(r)]));
  }
  loss /= rows;
  const bool ng = logits.needs_grad();
  int lid = logits.id;
  int id = g.add_node(Tensor::scalar(loss), ng,
                      !ng ? std::function<void(Graph&, Graph::Node&)>()
                          : [lid, labels = std::move(labels), probs = std::move(probs), rows, cols](Graph& g, Graph::Node& n) {
                              Tensor& dl = g.grad_buffer(lid);
                              const double c0 = n.grad[0] / rows;
                              for (int r = 0; r < rows; ++r)
                                for (int c = 0; c < cols; ++c)
                                  dl.at(r, c) += c0 * (probs.at(r, c) - (c == labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0));
                            });
  return Var{&g, id};
}

// Mean binary cross-entropy over logits against {0,1} targets, in the
// numerically stable max(x,0) - x*t + log(1+exp(-|x|)) form.
inline Var binary_cross_entropy_mean(Var logits, std::vector<double> targets) {
  Graph& g = *logits.g;
  const int n_el = logits.val().numel();
  if (static_cast<int>(targets.size()) != n_el) throw DimensionError("target count mismatch");
  double loss = 0.0;
  for (int i = 0; i < n_el; ++i) {
    const double x = logits.val()[i];
    const double t = targets[static_cast<std::size_t>(i)];
    loss += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= n_el;
  const bool ng = logits.needs_grad();
  int lid = logits.id;
  int id = g.add_node(Tensor::scalar(loss), ng,
                      !ng ? std::function<void(Graph&, Graph::Node&)>()
                          : [lid, targets = std::move(targets), n_el](Graph& g, Graph::Node& n) {
                              const Tensor& X = g.node(lid).val;
                              Tensor& dl = g.grad_buffer(lid);
                              const double c0 = n.grad[0] / n_el;
                              for (int i = 0; i < n_el; ++i) {
                                const double x = X[i];
                                const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                                dl[i] += c0 * (sig - targets[static_cast<std::size_t>(i)]);
                              }
                            });
  return Var{&g, id};
}

// Inverted dropout: zero with probability `rate`, scale survivors by
// 1/(1-rate); identity in eval mode so inference never rescales.
inline Var dropout(Var a, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return a;
  Graph& g = *a.g;
  std::bernoulli_distribution drop(rate);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(static_cast<std::size_t>(a.val().numel()));
  for (double& m : mask) m = drop(rng) ? 0.0 : keep_scale;
  Tensor out = a.val();
  for (int i = 0; i < out.numel(); ++i) out[i] *= mask[static_cast<std::size_t>(i)];
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, mask = std::move(mask)](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (int i = 0; i < da.numel(); ++i) da[i] += n.grad[i] * mask[static_cast<std::size_t>(i)];
  });
  return Var{&g, id};
}

// Row-wise sparsemax over the first lengths[r] entries of each row; padded
// positions are excluded from the projection and emit exact zeros.
inline Var sparsemax_rows(Var a, std::vector<int> lengths) {
  Graph& g = *a.g;
  const int rows = a.val().rows(), cols = a.val().cols();
  if (static_cast<int>(lengths.size()) != rows) throw DimensionError("lengths count mismatch");
  Tensor out({rows, cols});
  std::vector<std::vector<int>> supports(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const int len = lengths[static_cast<std::size_t>(r)];
    if (len < 1 || len > cols) throw DimensionError("row length out of range");
    std::vector<double> z(static_cast<std::size_t>(len));
    for (int c = 0; c < len; ++c) z[static_cast<std::size_t>(c)] = a.val().at(r, c);
    AttentionVector av = sparsemax(z);
    for (int c = 0; c < len; ++c) out.at(r, c) = av.scores[static_cast<std::size_t>(c)];
    supports[static_cast<std::size_t>(r)] = std::move(av.support);
  }
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, supports = std::move(supports)](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (int r = 0; r < n.val.rows(); ++r) {
      const auto& sup = supports[static_cast<std::size_t>(r)];
      if (sup.empty()) continue;
      double m = 0.0;
      for (int c : sup) m += n.grad.at(r, c);
      m /= static_cast<double>(sup.size());
      for (int c : sup) da.at(r, c) += n.grad.at(r, c) - m;
    }
  });
  return Var{&g, id};
}

// Sparsemax over arbitrary index groups of a column vector. Every group is
// projected independently; indices outside all groups emit zero.
inline Var sparsemax_groups(Var a, std::vector<std::vector<int>> groups) {
  Graph& g = *a.g;
  const int n_el = a.val().numel();
  Tensor out(a.val().shape);
  std::vector<std::vector<int>> supports(groups.size());  // indices into `a`
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& idx = groups[gi];
    std::vector<double> z(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= n_el) throw DimensionError("group index out of range");
      z[i] = a.val()[idx[i]];
    }
    AttentionVector av = sparsemax(z);
    for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = av.scores[i];
    for (int s : av.support) supports[gi].push_back(idx[static_cast<std::size_t>(s)]);
  }
  const bool ng = a.needs_grad();
  int aid = a.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [aid, supports = std::move(supports)](Graph& g, Graph::Node& n) {
    Tensor& da = g.grad_buffer(aid);
    for (const auto& sup : supports) {
      if (sup.empty()) continue;
      double m = 0.0;
      for (int i : sup) m += n.grad[i];
      m /= static_cast<double>(sup.size());
      for (int i : sup) da[i] += n.grad[i] - m;
    }
  });
  return Var{&g, id};
}

// out[r] = sum_t alpha[r,t] * steps[t][r,:] — the attention-weighted mix of
// per-timestep hidden rows.
inline Var attention_mix(const std::vector<Var>& steps, Var alpha) {
  if (steps.empty()) throw DimensionError("attention_mix over zero steps");
  Graph& g = *alpha.g;
  const int rows = steps[0].val().rows(), d = steps[0].val().cols();
  const int T = static_cast<int>(steps.size());
  if (alpha.val().rows() != rows || alpha.val().cols() != T)
    throw DimensionError("attention shape " + alpha.val().shape_str());
  Tensor out({rows, d});
  std::vector<int> step_ids(steps.size());
  bool ng = alpha.needs_grad();
  for (int t = 0; t < T; ++t) {
    step_ids[static_cast<std::size_t>(t)] = steps[static_cast<std::size_t>(t)].id;
    ng = ng || steps[static_cast<std::size_t>(t)].needs_grad();
    for (int r = 0; r < rows; ++r) {
      const double w = alpha.val().at(r, t);
      if (w == 0.0) continue;
      for (int c = 0; c < d; ++c) out.at(r, c) += w * steps[static_cast<std::size_t>(t)].val().at(r, c);
    }
  }
  int alpha_id = alpha.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [step_ids = std::move(step_ids), alpha_id, rows, d](Graph& g, Graph::Node& n) {
    const Tensor& A = g.node(alpha_id).val;
    const bool want_alpha = g.node(alpha_id).needs_grad;
    for (std::size_t t = 0; t < step_ids.size(); ++t) {
      const Tensor& H = g.node(step_ids[t]).val;
      const bool want_step = g.node(step_ids[t]).needs_grad;
      Tensor* dH = want_step ? &g.grad_buffer(step_ids[t]) : nullptr;
      Tensor* dA = want_alpha ? &g.grad_buffer(alpha_id) : nullptr;
      for (int r = 0; r < rows; ++r) {
        const double w = A.at(r, static_cast<int>(t));
        double acc = 0.0;
        for (int c = 0; c < d; ++c) {
          if (dH) dH->at(r, c) += w * n.grad.at(r, c);
          acc += H.at(r, c) * n.grad.at(r, c);
        }
        if (dA) dA->at(r, static_cast<int>(t)) += acc;
      }
    }
  });
  return Var{&g, id};
}

// out[g] = sum_{r in groups[g]} weights[r] * rows[r,:] — EDU rows mixed into
// one sentence row per group.
inline Var group_mix(Var rows_in, Var weights, std::vector<std::vector<int>> groups) {
  detail::check_same_graph(rows_in, weights);
  Graph& g = *rows_in.g;
  const int d = rows_in.val().cols();
  const int G = static_cast<int>(groups.size());
  Tensor out({G, d});
  for (int gi = 0; gi < G; ++gi)
    for (int r : groups[static_cast<std::size_t>(gi)]) {
      const double w = weights.val()[r];
      for (int c = 0; c < d; ++c) out.at(gi, c) += w * rows_in.val().at(r, c);
    }
  const bool ng = rows_in.needs_grad() || weights.needs_grad();
  int rid = rows_in.id, wid = weights.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [rid, wid, groups = std::move(groups), d](Graph& g, Graph::Node& n) {
    const Tensor& R = g.node(rid).val;
    const Tensor& W = g.node(wid).val;
    Tensor* dR = g.node(rid).needs_grad ? &g.grad_buffer(rid) : nullptr;
    Tensor* dW = g.node(wid).needs_grad ? &g.grad_buffer(wid) : nullptr;
    for (std::size_t gi = 0; gi < groups.size(); ++gi)
      for (int r : groups[gi]) {
        double acc = 0.0;
        for (int c = 0; c < d; ++c) {
          if (dR) dR->at(r, c) += W[r] * n.grad.at(static_cast<int>(gi), c);
          acc += R.at(r, c) * n.grad.at(static_cast<int>(gi), c);
        }
        if (dW) (*dW)[r] += acc;
      }
  });
  return Var{&g, id};
}

// Assemble a J x K matrix from scattered entries of a vector:
// out[j,k] = source[row_of[j*K + k]].
inline Var scatter_to_matrix(Var source, int J, int K, std::vector<int> row_of) {
  Graph& g = *source.g;
  if (static_cast<int>(row_of.size()) != J * K) throw DimensionError("scatter map size mismatch");
  Tensor out({J, K});
  for (int i = 0; i < J * K; ++i) out[i] = source.val()[row_of[static_cast<std::size_t>(i)]];
  const bool ng = source.needs_grad();
  int sid = source.id;
  int id = g.add_node(std::move(out), ng, !ng ? std::function<void(Graph&, Graph::Node&)>() : [sid, row_of = std::move(row_of)](Graph& g, Graph::Node& n) {
    Tensor& ds = g.grad_buffer(sid);
    for (std::size_t i = 0; i < row_of.size(); ++i) ds[row_of[i]] += n.grad[static_cast<int>(i)];
  });
  return Var{&g, id};
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace edua
