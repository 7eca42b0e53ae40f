#include "corrseg/threading.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace corrseg {

int worker_count() {
    static const int n = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        if (const char* env = std::getenv("CORRSEG_THREADS")) {
            int cap = std::atoi(env);
            if (cap >= 1) hw = std::min(hw, cap);
        }
        return hw;
    }();
    return n;
}

namespace {

// Fixed pool, started on first parallel call. Jobs are chunk ranges over
// [0, n); workers pull chunks from a shared atomic cursor.
class Pool {
public:
    Pool() {
        int workers = worker_count() - 1;  // caller thread participates
        for (int i = 0; i < workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(int64_t n, int64_t chunk, const std::function<void(int64_t, int64_t)>& fn) {
        std::unique_lock<std::mutex> lk(mu_);
        fn_ = &fn;
        total_ = n;
        chunk_ = chunk;
        cursor_.store(0, std::memory_order_relaxed);
        pending_ = static_cast<int>(threads_.size());
        ++generation_;
        lk.unlock();
        cv_.notify_all();

        drain();

        lk.lock();
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        fn_ = nullptr;
    }

private:
    void drain() {
        const auto* fn = fn_;
        int64_t n = total_, chunk = chunk_;
        for (;;) {
            int64_t begin = cursor_.fetch_add(chunk, std::memory_order_relaxed);
            if (begin >= n) break;
            (*fn)(begin, std::min(begin + chunk, n));
        }
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            std::unique_lock<std::mutex> lk(mu_);
            cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
            if (stop_) return;
            seen = generation_;
            lk.unlock();

            drain();

            lk.lock();
            if (--pending_ == 0) done_cv_.notify_one();
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(int64_t, int64_t)>* fn_ = nullptr;
    int64_t total_ = 0, chunk_ = 1;
    std::atomic<int64_t> cursor_{0};
    int pending_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

Pool& pool() {
    static Pool p;
    return p;
}

}  // namespace

void parallel_for_chunked(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    if (worker_count() == 1 || n == 1) {
        fn(0, n);
        return;
    }
    // ~4 chunks per worker keeps the tail balanced without much contention.
    int64_t chunk = std::max<int64_t>(1, n / (4 * worker_count()));
    pool().run(n, chunk, fn);
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    parallel_for_chunked(n, [&](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) fn(i);
    });
}

}  // namespace corrseg
