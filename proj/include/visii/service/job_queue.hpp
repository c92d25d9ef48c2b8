// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "json.hpp"

#include "visii/inversion.hpp"

namespace visii::service {

enum class JobKind { invert, apply };
enum class JobState { queued, running, done, failed };

std::string_view to_string(JobKind kind);
std::string_view to_string(JobState state);

inline constexpr std::size_t kLossTailLength = 50;

struct JobSnapshot {
    std::string id;
    JobKind kind = JobKind::invert;
    JobState state = JobState::queued;
    int progress = 0;
    int total = 0;
    std::deque<LossBreakdown> loss_tail;
    nlohmann::json config;
    std::string instruction_id;
    std::string result_path;
    std::string error;

    nlohmann::json to_json() const;
};

/// Handle the running work uses to publish progress.
class JobContext {
public:
    virtual ~JobContext() = default;
    virtual const std::string& id() const = 0;
    virtual void set_progress(int done) = 0;
    virtual void push_loss(const LossBreakdown& loss) = 0;
    virtual void set_result(const std::string& instruction_id, const std::string& result_path) = 0;
};

/// FIFO queue drained by one worker thread, so at most one job touches the
/// backend at a time. Snapshots are safe to take from any thread.
class JobQueue {
public:
    using Work = std::function<void(JobContext&)>;

    JobQueue();
    ~JobQueue();

    JobQueue(const JobQueue&) = delete;
    JobQueue& operator=(const JobQueue&) = delete;

    std::string submit(JobKind kind, int total, nlohmann::json config, Work work);
    std::optional<JobSnapshot> get(const std::string& id) const;

    /// Blocks until the queue is empty and the worker is idle.
    void wait_idle();

    void shutdown();

private:
    struct Entry;
    class Context;

    void run();

    mutable std::mutex m_mutex;
    std::condition_variable m_wake;
    std::condition_variable m_idle;
    std::map<std::string, std::shared_ptr<Entry>> m_jobs;
    std::deque<std::shared_ptr<Entry>> m_pending;
    bool m_busy = false;
    bool m_stop = false;
    std::thread m_worker;
};

/// Random (version 4) UUID string.
std::string make_uuid();

}  // namespace visii::service
