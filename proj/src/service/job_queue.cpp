// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/service/job_queue.hpp"

#include <algorithm>

#include <boost/uuid/random_generator.hpp>
#include <boost/uuid/uuid_io.hpp>

namespace visii::service {

std::string_view to_string(JobKind kind) { return kind == JobKind::invert ? "invert" : "apply"; }

std::string_view to_string(JobState state) {
    switch (state) {
    case JobState::queued:
        return "queued";
    case JobState::running:
        return "running";
    case JobState::done:
        return "done";
    case JobState::failed:
        return "failed";
    }
    return "unknown";
}

nlohmann::json JobSnapshot::to_json() const {
    nlohmann::json tail = nlohmann::json::array();
    for (const auto& loss : loss_tail) {
        tail.push_back({{"step", loss.step},
                        {"t", loss.t},
                        {"total", loss.total},
                        {"mse", loss.mse},
                        {"clip", loss.clip}});
    }
    nlohmann::json out = {
        {"id", id},
        {"kind", to_string(kind)},
        {"state", to_string(state)},
        {"progress", {{"done", progress}, {"total", total}}},
        {"loss_tail", tail},
        {"config", config},
    };
    out["error"] = error.empty() ? nlohmann::json(nullptr) : nlohmann::json(error);
    if (!instruction_id.empty()) {
        out["instruction_id"] = instruction_id;
        out["instruction_url"] = "/instructions/" + instruction_id;
    }
    if (kind == JobKind::apply && state == JobState::done) {
        out["image_url"] = "/jobs/" + id + "/image";
    }
    return out;
}

struct JobQueue::Entry {
    JobSnapshot snapshot;
    Work work;
};

class JobQueue::Context final : public JobContext {
public:
    Context(std::mutex& mutex, Entry& entry) : m_mutex(mutex), m_entry(entry), m_id(entry.snapshot.id) {}

    const std::string& id() const override { return m_id; }

    void set_progress(int done) override {
        std::lock_guard lock(m_mutex);
        m_entry.snapshot.progress = std::max(m_entry.snapshot.progress, done);
    }
    void push_loss(const LossBreakdown& loss) override {
        std::lock_guard lock(m_mutex);
        auto& tail = m_entry.snapshot.loss_tail;
        tail.push_back(loss);
        while (tail.size() > kLossTailLength) {
            tail.pop_front();
        }
    }
    void set_result(const std::string& instruction_id, const std::string& result_path) override {
        std::lock_guard lock(m_mutex);
        m_entry.snapshot.instruction_id = instruction_id;
        m_entry.snapshot.result_path = result_path;
    }

private:
    std::mutex& m_mutex;
    Entry& m_entry;
    std::string m_id;
};

JobQueue::JobQueue() : m_worker([this] { run(); }) {}

JobQueue::~JobQueue() { shutdown(); }

void JobQueue::shutdown() {
    {
        std::lock_guard lock(m_mutex);
        m_stop = true;
    }
    m_wake.notify_all();
    if (m_worker.joinable()) {
        m_worker.join();
    }
}

std::string JobQueue::submit(JobKind kind, int total, nlohmann::json config, Work work) {
    auto entry = std::make_shared<Entry>();
    entry->snapshot.id = make_uuid();
    entry->snapshot.kind = kind;
    entry->snapshot.total = total;
    entry->snapshot.config = std::move(config);
    entry->work = std::move(work);
    const auto id = entry->snapshot.id;
    {
        std::lock_guard lock(m_mutex);
        m_jobs.emplace(id, entry);
        m_pending.push_back(std::move(entry));
    }
    m_wake.notify_one();
    return id;
}

std::optional<JobSnapshot> JobQueue::get(const std::string& id) const {
    std::lock_guard lock(m_mutex);
    auto it = m_jobs.find(id);
    if (it == m_jobs.end()) {
        return std::nullopt;
    }
    return it->second->snapshot;
}

void JobQueue::wait_idle() {
    std::unique_lock lock(m_mutex);
    m_idle.wait(lock, [this] { return m_pending.empty() && !m_busy; });
}

void JobQueue::run() {
    for (;;) {
        std::shared_ptr<Entry> entry;
        {
            std::unique_lock lock(m_mutex);
            m_wake.wait(lock, [this] { return m_stop || !m_pending.empty(); });
            if (m_stop) {
                return;
            }
            entry = std::move(m_pending.front());
            m_pending.pop_front();
            entry->snapshot.state = JobState::running;
            m_busy = true;
        }

        Context context(m_mutex, *entry);
        JobState final_state = JobState::done;
        std::string error;
        try {
            entry->work(context);
        } catch (const std::exception& e) {
            final_state = JobState::failed;
            error = e.what();
        }
        {
            std::lock_guard lock(m_mutex);
            entry->snapshot.state = final_state;
            entry->snapshot.error = std::move(error);
            if (final_state == JobState::done) {
                entry->snapshot.progress = entry->snapshot.total;
            }
            entry->work = nullptr;
            m_busy = false;
        }
        m_idle.notify_all();
    }
}

std::string make_uuid() {
    thread_local boost::uuids::random_generator generator;
    return boost::uuids::to_string(generator());
}

}  // namespace visii::service
