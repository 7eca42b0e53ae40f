#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "corrseg/tensor.hpp"

namespace corrseg {

// Reverse-mode tape. Nodes are appended in execution order, so inputs of a
// node always precede it and a single reverse sweep visits each node once.
//
// One tape serves one thread at a time; distinct tapes are independent.
class Tape {
public:
    // Returns the id of the new node. backward reads the output grad and
    // accumulates into the inputs' grads.
    int record(std::shared_ptr<TensorImpl> output, std::function<void()> backward);

    // Seeds d(loss)/d(loss) = 1 and sweeps nodes [loss_node .. 0]. Grads of
    // intermediate (tape-produced) tensors are reset per call; grads of
    // leaves accumulate across calls until zeroed by the caller.
    void backward(const Tensor& loss);

    size_t size() const { return nodes_.size(); }

    static Tape* active();

private:
    friend class TapeScope;
    struct Node {
        std::shared_ptr<TensorImpl> output;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
};

// RAII activation: ops record onto the innermost active tape. No active
// tape means pure inference (nothing recorded, requires_grad not propagated).
class TapeScope {
public:
    TapeScope();
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

    Tape& tape() { return tape_; }
    void backward(const Tensor& loss) { tape_.backward(loss); }

private:
    Tape tape_;
    Tape* prev_;
};

// Helpers shared by op implementations.
void ensure_grad(TensorImpl& t);
void accumulate_grad(TensorImpl& t, const std::vector<float>& contribution);

}  // namespace corrseg
