#ifndef TEMPO_SGD_HPP
#define TEMPO_SGD_HPP

#include <cstdint>
#include <vector>

#include "tempo/tensor.hpp"

namespace tempo {

struct TrainSchedule {
  std::int64_t epochs = 10;
  double lr = 0.05;
  double momentum = 0.9;
  std::int64_t batch = 32;
  std::vector<std::int64_t> decay_epochs;  // lr *= decay_factor after these (1-based)
  double decay_factor = 0.1;

  double lr_at(std::int64_t epoch) const {  // epoch is 1-based
    double v = lr;
    for (auto e : decay_epochs)
      if (epoch > e) v *= decay_factor;
    return v;
  }
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_acc;
};

class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double momentum = 0.9)
      : params_(std::move(params)), momentum_(momentum) {
    for (auto& p : params_) velocity_.emplace_back(p.size(), 0.0);
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step(double lr) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      const auto& g = p.grad();
      auto& v = velocity_[k];
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i];
        p.data()[i] -= lr * v[i];
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace tempo

#endif  // TEMPO_SGD_HPP
