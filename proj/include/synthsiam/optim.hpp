#pragma once

// Flat-vector gradient-descent optimizers shared by the Siamese trainer and
// the single-input baseline.

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "synthsiam/errors.hpp"

namespace synthsiam {

class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(std::vector<double>& params, const std::vector<double>& grad) = 0;
};

class SgdOptimizer final : public Optimizer {
public:
    explicit SgdOptimizer(double learning_rate, double momentum = 0.9)
        : lr_(learning_rate), momentum_(momentum) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) override {
        if (velocity_.size() != params.size()) velocity_.assign(params.size(), 0.0);
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity_[i] = momentum_ * velocity_[i] - lr_ * grad[i];
            params[i] += velocity_[i];
        }
    }

private:
    double lr_;
    double momentum_;
    std::vector<double> velocity_;
};

class AdamOptimizer final : public Optimizer {
public:
    explicit AdamOptimizer(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                           double epsilon = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) override {
        if (m_.size() != params.size()) {
            m_.assign(params.size(), 0.0);
            v_.assign(params.size(), 0.0);
            t_ = 0;
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
            params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
        }
    }

private:
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t t_ = 0;
};

inline std::unique_ptr<Optimizer> make_optimizer(const std::string& name,
                                                 double learning_rate) {
    if (name == "adam") return std::make_unique<AdamOptimizer>(learning_rate);
    if (name == "sgd") return std::make_unique<SgdOptimizer>(learning_rate);
    throw InvalidArgument("unknown optimizer '" + name + "' (expected adam or sgd)");
}

} // namespace synthsiam
