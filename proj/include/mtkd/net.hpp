#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtkd/matrix.hpp"
#include "mtkd/rng.hpp"

namespace mtkd {

enum class Activation { None, Relu };

inline std::string activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "none";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "none") return Activation::None;
    throw ParameterError("unknown activation: " + s);
}

/// Layer sizes plus activations plus an init seed fully determine a network.
struct NetSpec {
    std::vector<std::size_t> layer_sizes;  // [in, h1, ..., out]
    std::vector<Activation> activations;   // one per affine layer
    std::uint64_t init_seed = 0;

    void validate() const {
        if (layer_sizes.size() < 2)
            throw ParameterError("NetSpec: need at least input and output sizes");
        if (activations.size() != layer_sizes.size() - 1)
            throw ParameterError("NetSpec: activations must be one shorter than sizes");
        for (std::size_t s : layer_sizes)
            if (s == 0) throw ParameterError("NetSpec: zero layer size");
    }

    // [in, h..., out] with ReLU on hidden layers, linear output
    static NetSpec mlp(std::vector<std::size_t> sizes, std::uint64_t seed) {
        NetSpec spec;
        spec.layer_sizes = std::move(sizes);
        spec.activations.assign(spec.layer_sizes.size() - 1, Activation::Relu);
        spec.activations.back() = Activation::None;
        spec.init_seed = seed;
        spec.validate();
        return spec;
    }
};

/// Stack of affine layers with cached forward intermediates. The cache from
/// the most recent forward pass enables an exact manual backward pass.
class DenseNet {
public:
    struct Layer {
        ParamTensor weights;  // in x out
        ParamTensor bias;     // 1 x out
        Activation activation;
    };

    DenseNet() = default;

    explicit DenseNet(const NetSpec& spec) : spec_(spec) {
        spec.validate();
        Rng rng(spec.init_seed, "net-init");
        for (std::size_t k = 0; k + 1 < spec.layer_sizes.size(); ++k) {
            std::size_t fan_in = spec.layer_sizes[k];
            std::size_t fan_out = spec.layer_sizes[k + 1];
            double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
            Matrix2D w(fan_in, fan_out);
            for (double& v : w.data) v = rng.uniform(-bound, bound);
            layers_.push_back(Layer{ParamTensor(std::move(w)),
                                    ParamTensor(Matrix2D(1, fan_out)),
                                    spec.activations[k]});
        }
    }

    const NetSpec& spec() const { return spec_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::size_t input_dim() const { return spec_.layer_sizes.front(); }
    std::size_t output_dim() const { return spec_.layer_sizes.back(); }
    /// Width of the penultimate activation (== input dim for one-layer nets).
    std::size_t feature_dim() const {
        return spec_.layer_sizes[spec_.layer_sizes.size() - 2];
    }

    std::vector<ParamTensor*> params() {
        std::vector<ParamTensor*> out;
        for (Layer& l : layers_) {
            out.push_back(&l.weights);
            out.push_back(&l.bias);
        }
        return out;
    }

    void zero_grads() {
        for (Layer& l : layers_) {
            l.weights.zero_grad();
            l.bias.zero_grad();
        }
    }

    /// Forward pass returning (penultimate feature, final logits).
    /// With retain_cache the intermediates are kept for backward();
    /// cache-free forwards are safe for concurrent readers.
    std::pair<Matrix2D, Matrix2D> forward_features(const Matrix2D& x,
                                                   bool retain_cache = true) {
        if (x.cols != input_dim())
            throw ShapeError("forward: input " + x.shape_str() + " vs expected cols " +
                             std::to_string(input_dim()));
        std::vector<Matrix2D> acts;       // a_0 .. a_L
        std::vector<Matrix2D> preacts;    // z_0 .. z_{L-1}
        acts.push_back(x);
        for (const Layer& l : layers_) {
            Matrix2D z = add_row_broadcast(matmul(acts.back(), l.weights.value),
                                           l.bias.value);
            preacts.push_back(z);
            acts.push_back(l.activation == Activation::Relu ? relu(z) : z);
        }
        Matrix2D feature = acts[acts.size() - 2];
        Matrix2D logits = acts.back();
        if (retain_cache) {
            cached_acts_ = std::move(acts);
            cached_preacts_ = std::move(preacts);
            has_cache_ = true;
        }
        return {std::move(feature), std::move(logits)};
    }

    Matrix2D forward(const Matrix2D& x, bool retain_cache = true) {
        return forward_features(x, retain_cache).second;
    }

    /// Backward through the cached forward. grad_feature, when present, is
    /// injected at the penultimate activation and summed with the logit path.
    /// Parameter grads accumulate; returns the gradient wrt the input batch.
    Matrix2D backward(const Matrix2D& grad_logits,
                      const std::optional<Matrix2D>& grad_feature = std::nullopt) {
        if (!has_cache_)
            throw StateError("backward: no forward cache (call forward_features first)");
        if (grad_logits.rows != cached_acts_.front().rows ||
            grad_logits.cols != output_dim())
            throw ShapeError("backward: grad_logits " + grad_logits.shape_str() +
                             " does not match cached forward");
        if (grad_feature && (grad_feature->rows != cached_acts_.front().rows ||
                             grad_feature->cols != feature_dim()))
            throw ShapeError("backward: grad_feature " + grad_feature->shape_str() +
                             " does not match penultimate shape");
        Matrix2D d = grad_logits;
        for (std::size_t k = layers_.size(); k-- > 0;) {
            Layer& l = layers_[k];
            if (l.activation == Activation::Relu)
                d = relu_backward(cached_preacts_[k], d);
            // accumulate parameter grads
            Matrix2D wgrad = matmul(transpose(cached_acts_[k]), d);
            for (std::size_t i = 0; i < wgrad.data.size(); ++i)
                l.weights.grad.data[i] += wgrad.data[i];
            for (std::size_t i = 0; i < d.rows; ++i)
                for (std::size_t j = 0; j < d.cols; ++j)
                    l.bias.grad.at(0, j) += d.at(i, j);
            d = matmul(d, transpose(l.weights.value));
            if (grad_feature && k == layers_.size() - 1) d = add(d, *grad_feature);
        }
        return d;
    }

    void invalidate_cache() { has_cache_ = false; }

private:
    NetSpec spec_;
    std::vector<Layer> layers_;
    std::vector<Matrix2D> cached_acts_;
    std::vector<Matrix2D> cached_preacts_;
    bool has_cache_ = false;
};

inline DenseNet build_net(const NetSpec& spec) { return DenseNet(spec); }

}  // namespace mtkd
