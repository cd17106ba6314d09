#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mmm/core/error.hpp"
#include "mmm/core/rng.hpp"

namespace mmm::core {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // empty means "no gradient yet"
    std::string name;         // set when registered as a parameter
};

// Shared handle to a dense row-major array of doubles. Copying a Tensor
// aliases the same storage; operations never mutate their inputs.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false) {
        const std::size_t n = shape_numel(shape);
        if (data.size() != n)
            throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        impl_ = std::make_shared<TensorImpl>();
        impl_->shape = std::move(shape);
        impl_->data = std::move(data);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 0.0, requires_grad);
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        std::vector<double> data(shape_numel(shape), v);
        return Tensor(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor(Shape{}, std::vector<double>{v}, requires_grad);
    }

    // Values uniform in [-bound, bound], drawn from the given stream.
    static Tensor uniform(Rng& rng, Shape shape, double bound, bool requires_grad = false) {
        std::vector<double> data(shape_numel(shape));
        for (double& v : data) v = rng.uniform(-bound, bound);
        return Tensor(std::move(shape), std::move(data), requires_grad);
    }

    bool valid() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t numel() const { return impl_->data.size(); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }

    // Scalar value (numel must be 1).
    double value() const {
        if (numel() != 1)
            throw ContractError("value(): tensor " + shape_str(shape()) + " is not a scalar");
        return impl_->data[0];
    }

    double& at(std::size_t r, std::size_t c) {
        return impl_->data[r * impl_->shape[1] + c];
    }
    double at(std::size_t r, std::size_t c) const {
        return impl_->data[r * impl_->shape[1] + c];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::vector<double>& grad() {
        if (impl_->grad.empty())
            throw ContractError("grad(): no gradient present for tensor " + shape_str(shape()));
        return impl_->grad;
    }
    const std::vector<double>& grad() const {
        return const_cast<Tensor*>(this)->grad();
    }
    void clear_grad() { impl_->grad.clear(); }

    const std::string& name() const { return impl_->name; }
    void set_name(std::string n) { impl_->name = std::move(n); }

    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Names the trainable tensors of a model so freeze sets, checkpoints and the
// unused-parameter report can all refer to them consistently. Registration
// order is the canonical serialization order.
class ParamRegistry {
public:
    void add(const std::string& name, const Tensor& t) {
        if (!t.valid() || !t.requires_grad())
            throw ContractError("registry: parameter '" + name +
                                "' must be a tensor with requires_grad=true (frozen features "
                                "cannot be registered as trainable)");
        if (by_name_.count(name))
            throw ContractError("registry: duplicate parameter name '" + name + "'");
        Tensor copy = t;
        copy.set_name(name);
        by_name_[name] = params_.size();
        params_.push_back(copy);
    }

    bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

    Tensor get(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end())
            throw ContractError("registry: unknown parameter '" + name + "'");
        return params_[it->second];
    }

    const std::vector<Tensor>& params() const { return params_; }
    std::size_t size() const { return params_.size(); }

    // Parameters whose dotted name starts with any of the prefixes.
    std::vector<Tensor> select_prefixes(const std::vector<std::string>& prefixes) const {
        std::vector<Tensor> out;
        for (const Tensor& p : params_) {
            for (const std::string& pre : prefixes) {
                if (p.name().rfind(pre, 0) == 0) {
                    out.push_back(p);
                    break;
                }
            }
        }
        return out;
    }

    // Drops all gradients. A missing gradient is distinguishable from a zero
    // one, which is what the optimizer's missing-gradient check relies on.
    void zero_grad() const {
        for (const Tensor& p : params_) p.impl()->grad.clear();
    }

private:
    std::vector<Tensor> params_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

struct BackwardReport {
    // Registered parameters not reachable from the loss, in registration order.
    std::vector<std::string> unused;
    bool all_used() const { return unused.empty(); }
};

// Dynamic tape. Rebuilt for every forward pass; confined to one thread.
// Ops append nodes in creation order, which is a valid topological order.
class Graph {
public:
    using BackwardFn = std::function<void()>;

    void record(const Tensor& out, std::vector<Tensor> inputs, BackwardFn fn) {
        Node n;
        n.out = out.impl_ptr();
        for (Tensor& in : inputs)
            if (in.requires_grad()) n.inputs.push_back(in.impl_ptr());
        n.fn = std::move(fn);
        nodes_.push_back(std::move(n));
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    BackwardReport backward(const Tensor& loss) { return run_backward(loss, nullptr); }
    BackwardReport backward(const Tensor& loss, const ParamRegistry& reg) {
        return run_backward(loss, &reg);
    }

private:
    struct Node {
        std::shared_ptr<TensorImpl> out;
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        BackwardFn fn;
    };

    BackwardReport run_backward(const Tensor& loss, const ParamRegistry* reg) {
        if (!loss.valid() || loss.numel() != 1)
            throw ContractError("backward: loss must be a scalar, got " +
                                (loss.valid() ? shape_str(loss.shape()) : std::string("<empty>")));

        // Mark the subgraph that actually feeds the loss. One reverse sweep
        // suffices because inputs are always created before their consumers.
        std::unordered_set<TensorImpl*> active;
        active.insert(loss.impl());
        std::vector<char> needed(nodes_.size(), 0);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (!active.count(n.out.get())) continue;
            needed[i] = 1;
            for (auto& in : n.inputs) active.insert(in.get());
        }

        auto ensure = [](TensorImpl* t) {
            if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
        };
        ensure(loss.impl());
        loss.impl()->grad[0] += 1.0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (!needed[i]) continue;
            ensure(nodes_[i].out.get());
            for (auto& in : nodes_[i].inputs) ensure(in.get());
        }

        for (std::size_t i = nodes_.size(); i-- > 0;)
            if (needed[i]) nodes_[i].fn();

        BackwardReport rep;
        if (reg) {
            for (const Tensor& p : reg->params())
                if (!active.count(p.impl())) rep.unused.push_back(p.name());
        }
        return rep;
    }

    std::vector<Node> nodes_;
};

} // namespace mmm::core
