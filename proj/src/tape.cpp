#include "corrseg/tape.hpp"

#include <stdexcept>

namespace corrseg {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope() : prev_(g_active_tape) { g_active_tape = &tape_; }

TapeScope::~TapeScope() { g_active_tape = prev_; }

int Tape::record(std::shared_ptr<TensorImpl> output, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(output), std::move(backward)});
    int id = static_cast<int>(nodes_.size()) - 1;
    nodes_.back().output->tape_node = id;
    return id;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.is_scalar()) {
        throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    int start = loss.tape_node();
    if (start < 0) {
        throw std::invalid_argument("backward: loss is not on the tape");
    }
    // Intermediate grads are per-call scratch; leaf grads accumulate across
    // calls, so repeated backward without zero_grad doubles leaf grads.
    for (int i = 0; i <= start; ++i) {
        TensorImpl& out = *nodes_[static_cast<size_t>(i)].output;
        out.grad.assign(out.data.size(), 0.0f);
    }
    nodes_[static_cast<size_t>(start)].output->grad[0] = 1.0f;
    for (int i = start; i >= 0; --i) {
        nodes_[static_cast<size_t>(i)].backward();
    }
}

void ensure_grad(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0f);
}

void accumulate_grad(TensorImpl& t, const std::vector<float>& contribution) {
    ensure_grad(t);
    for (size_t i = 0; i < contribution.size(); ++i) t.grad[i] += contribution[i];
}

}  // namespace corrseg
