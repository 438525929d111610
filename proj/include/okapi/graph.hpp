#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "okapi/util.hpp"

namespace okapi {

// One value in the computation graph. data and grad are flat row-major
// arrays; product(shape) == data.size() == grad.size() always holds.
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad; // zero after construction and zero_grad
    std::string op_tag;
    std::vector<TensorNode*> parents;
    std::function<void()> backward_fn; // empty for leaves / no-grad graphs
    bool is_constant = false;          // constants end every backward with zero grad

    size_t numel() const { return data.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    bool is_scalar() const { return data.size() == 1; }
};

// Arena of TensorNodes in topological (construction) order. Single-threaded;
// independent graphs may live on separate threads. All arithmetic is double.
class Graph {
public:
    explicit Graph(uint64_t seed = 0, bool grad_enabled = true)
        : rng_(seed), grad_enabled_(grad_enabled) {}

    Rng& rng() { return rng_; }
    bool grad_enabled() const { return grad_enabled_; }

    // Leaves. input() participates in gradient flow; constant() never does.
    TensorNode* input(std::vector<int> shape, std::vector<double> data,
                      const std::string& tag = "input");
    TensorNode* constant(std::vector<int> shape, std::vector<double> data);
    TensorNode* scalar(double v);

    // Elementwise / broadcast. add() accepts equal shapes or [r,c] + bias [c];
    // no other broadcasting exists.
    TensorNode* add(TensorNode* a, TensorNode* b);
    TensorNode* sub(TensorNode* a, TensorNode* b);
    TensorNode* mul(TensorNode* a, TensorNode* b);
    TensorNode* scale(TensorNode* a, double k);
    TensorNode* sigmoid(TensorNode* a);
    TensorNode* softplus(TensorNode* a); // log(1+exp(x)), stable
    TensorNode* gelu(TensorNode* a);     // exact erf form
    TensorNode* exp(TensorNode* a);
    TensorNode* min_elem(TensorNode* a, TensorNode* b); // ties follow a
    TensorNode* clamp(TensorNode* a, double lo, double hi);

    // Linear algebra (2-D).
    TensorNode* matmul(TensorNode* a, TensorNode* b);
    TensorNode* transpose(TensorNode* a);

    // Row-wise (last axis) normalizations for 1-D or 2-D input.
    TensorNode* softmax(TensorNode* a);
    TensorNode* log_softmax(TensorNode* a);
    TensorNode* layer_norm(TensorNode* a, TensorNode* gain, TensorNode* bias);

    // Shape ops on 2-D tensors; axis 0 = rows, 1 = cols.
    TensorNode* concat(TensorNode* a, TensorNode* b, int axis);
    TensorNode* slice(TensorNode* a, int axis, int begin, int end);

    // Indexed access.
    TensorNode* embedding_lookup(TensorNode* table, const std::vector<int>& ids);
    TensorNode* gather_rows(TensorNode* a, const std::vector<int>& ids); // out[i]=a[i,ids[i]]

    // Reductions to scalar.
    TensorNode* sum(TensorNode* a);
    TensorNode* mean(TensorNode* a);

    // Reverse-mode sweep from a scalar loss. Repeated calls without
    // zero_grad() accumulate another full d loss / d node into every grad.
    void backward(TensorNode* loss);
    void zero_grad();

    size_t size() const { return nodes_.size(); }

private:
    TensorNode* new_node(std::vector<int> shape, const std::string& tag,
                         std::vector<TensorNode*> parents);
    TensorNode* unary(TensorNode* a, const std::string& tag,
                      double (*f)(double), double (*df)(double, double));

    std::deque<TensorNode> nodes_; // deque: stable addresses
    Rng rng_;
    bool grad_enabled_;
};

std::string shape_str(const std::vector<int>& shape);

} // namespace okapi
