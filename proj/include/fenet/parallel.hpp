#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fenet {

inline int worker_count() {
    static const int n = [] {
        if (const char* env = std::getenv("FENET_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) return v;
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : int(hc);
    }();
    return n;
}

namespace detail {

// Persistent pool; worker t always handles indices t, t+W, t+2W, ... so the
// index->thread assignment never depends on scheduling. Per-index work stays
// sequential, which keeps results bitwise identical for any thread count.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool(worker_count());
        return pool;
    }

    void run(std::size_t n, const std::function<void(std::size_t)>& fn) {
        if (n == 0) return;
        const std::size_t w = std::size_t(nworkers_) + 1;
        if (nworkers_ == 0 || n == 1 || in_worker()) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        {
            std::lock_guard<std::mutex> lock(m_);
            fn_ = &fn;
            n_ = n;
            stride_ = w;
            pending_ = nworkers_;
            ++job_id_;
        }
        cv_job_.notify_all();
        for (std::size_t i = 0; i < n; i += w) fn(i);
        std::unique_lock<std::mutex> lock(m_);
        cv_done_.wait(lock, [&] { return pending_ == 0; });
        fn_ = nullptr;
    }

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lock(m_);
            stop_ = true;
            ++job_id_;
        }
        cv_job_.notify_all();
        for (auto& t : threads_) t.join();
    }

private:
    explicit ThreadPool(int total) : nworkers_(total > 1 ? total - 1 : 0) {
        threads_.reserve(std::size_t(nworkers_));
        for (int t = 0; t < nworkers_; ++t) {
            threads_.emplace_back([this, t] { worker_loop(std::size_t(t) + 1); });
        }
    }

    static bool& in_worker() {
        thread_local bool flag = false;
        return flag;
    }

    void worker_loop(std::size_t offset) {
        in_worker() = true;
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t)>* fn = nullptr;
            std::size_t n = 0, stride = 0;
            {
                std::unique_lock<std::mutex> lock(m_);
                cv_job_.wait(lock, [&] { return job_id_ != seen; });
                seen = job_id_;
                if (stop_) return;
                fn = fn_;
                n = n_;
                stride = stride_;
            }
            for (std::size_t i = offset; i < n; i += stride) (*fn)(i);
            {
                std::lock_guard<std::mutex> lock(m_);
                if (--pending_ == 0) cv_done_.notify_all();
            }
        }
    }

    const int nworkers_;
    std::vector<std::thread> threads_;
    std::mutex m_;
    std::condition_variable cv_job_;
    std::condition_variable cv_done_;
    const std::function<void(std::size_t)>* fn_ = nullptr;
    std::size_t n_ = 0;
    std::size_t stride_ = 0;
    int pending_ = 0;
    std::uint64_t job_id_ = 0;
    bool stop_ = false;
};

}  // namespace detail

// Runs fn(i) for i in [0, n). Writers must touch disjoint outputs per index.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::function<void(std::size_t)> wrapped = std::forward<Fn>(fn);
    detail::ThreadPool::instance().run(n, wrapped);
}

// Serial fallback for loops too small to amortize handoff.
template <typename Fn>
void parallel_for_if(bool parallel, std::size_t n, Fn&& fn) {
    if (parallel) {
        parallel_for(n, std::forward<Fn>(fn));
    } else {
        for (std::size_t i = 0; i < n; ++i) fn(i);
    }
}

}  // namespace fenet
