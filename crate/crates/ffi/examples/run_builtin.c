/* Runs a short experiment1 replica and prints class 1 deliveries.
 *
 *   cc run_builtin.c -I../include -L../../../target/debug -lmeshqos_ffi
 */
#include <stdio.h>

#include "meshqos.h"

static int fail(MqStatus st) {
    const char *msg = mq_last_error();
    fprintf(stderr, "error %d: %s\n", (int)st, msg ? msg : "(none)");
    return 1;
}

int main(void) {
    MqScenario *scenario = NULL;
    MqRun *run = NULL;
    MqStatus st;

    if ((st = mq_scenario_builtin("experiment1", &scenario)) != MQ_STATUS_OK) return fail(st);
    if ((st = mq_scenario_set_packet_count(scenario, 30)) != MQ_STATUS_OK) return fail(st);
    if ((st = mq_run(scenario, 42, &run)) != MQ_STATUS_OK) return fail(st);

    size_t n = 0;
    mq_run_record_count(run, &n);
    size_t sent = 0, delivered = 0;
    for (size_t i = 0; i < n; i++) {
        MqRecord r;
        if ((st = mq_run_get_record(run, i, &r)) != MQ_STATUS_OK) return fail(st);
        if (r.priority_class == 1) {
            sent++;
            delivered += r.delivered;
        }
    }
    printf("records %zu class1 %zu/%zu\n", n, delivered, sent);

    uint32_t field = 0;
    if (mq_pack_seq_priority(70000, 1, &field) != MQ_STATUS_RANGE) return 1;

    mq_run_free(run);
    mq_scenario_free(scenario);
    return 0;
}
