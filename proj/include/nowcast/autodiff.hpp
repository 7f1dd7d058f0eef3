#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nowcast::ad {

/// NCHW extent. Dense activations use {batch, features, 1, 1}.
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t size() const {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
               static_cast<std::size_t>(w);
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
    std::size_t per_sample() const { return static_cast<std::size_t>(c) * plane(); }
    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape(s), data(s.size(), fill) {}

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    double& at(int n, int c, int y, int x) {
        return data[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x];
    }
    double at(int n, int c, int y, int x) const {
        return data[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x];
    }
};

/// A named learnable array with its gradient accumulator and Adam moments.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;

    Parameter() = default;
    Parameter(std::string n, Shape s) : name(std::move(n)), value(s), grad(s), adam_m(s), adam_v(s) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

void init_uniform(Parameter& p, double bound, std::mt19937_64& rng);
/// Glorot-uniform with the given fan sizes.
void init_glorot(Parameter& p, double fan_in, double fan_out, std::mt19937_64& rng);

class Graph;

/// Handle to a node on a Graph tape.
struct Var {
    Graph* graph = nullptr;
    int id = -1;

    const Tensor& value() const;
    const Shape& shape() const;
    bool valid() const { return graph != nullptr; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so replaying
/// backward closures in reverse order is a valid topological sweep.
class Graph {
public:
    using Backward = std::function<void(Graph&, int self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    /// Frozen parameters enter as constants and never receive gradient.
    Var parameter(Parameter& p, bool trainable = true);

    Var make(Tensor value, std::span<const Var> parents, Backward backward);

    const Tensor& value(int id) const { return nodes_[id]->value; }
    bool requires_grad(int id) const { return nodes_[id]->requires_grad; }
    /// Gradient buffer of a node, allocated on first use.
    Tensor& grad(int id);
    bool has_grad(int id) const { return !nodes_[id]->grad.data.empty(); }

    /// Seeds d(root)/d(root) = 1 and accumulates into trainable Parameter::grad.
    void backward(Var root);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        Backward backward;
    };
    std::vector<std::unique_ptr<Node>> nodes_;
};

// ---------------------------------------------------------------------------
// Operations. All shapes are validated; mismatches throw ShapeMismatch.
// ---------------------------------------------------------------------------

/// weight {Cout, Cin, k, k}, bias {1, Cout, 1, 1} or invalid Var for none.
Var conv2d(Var x, Var weight, Var bias, int stride, int pad);
/// weight {Cin, Cout, k, k}; output size (H-1)*stride - 2*pad + k.
Var conv_transpose2d(Var x, Var weight, Var bias, int stride, int pad);
/// x {N, F, 1, 1} (any NCHW is flattened per sample), weight {O, F, 1, 1}, bias {1, O, 1, 1}.
Var dense(Var x, Var weight, Var bias);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var one_minus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);

Var concat_channels(std::span<const Var> parts);
Var slice_channels(Var a, int begin, int end);
Var reshape(Var a, Shape s);
/// Average over k x k windows; edge windows average only their valid cells.
Var avg_pool(Var a, int k);

Var sum(Var a);
Var mean(Var a);
/// Sum over all but the batch axis: {N, ...} -> {N, 1, 1, 1}.
Var sum_per_sample(Var a);

}  // namespace nowcast::ad
