#ifndef MESHQOS_H
#define MESHQOS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MQ_MAX_PAYLOAD 11

/**
 * Largest encoded network PDU.
 */
#define MQ_MAX_PDU_LEN 19

typedef enum {
  MQ_STATUS_OK = 0,
  MQ_STATUS_NULL_POINTER = 1,
  MQ_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A value does not fit its wire field.
   */
  MQ_STATUS_RANGE = 3,
  MQ_STATUS_PARSE = 4,
  MQ_STATUS_VALIDATION = 5,
  MQ_STATUS_IO = 6,
  MQ_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  MQ_STATUS_PANIC = 8,
} MqStatus;

/**
 * The output of one simulation run.
 */
typedef struct MqRun MqRun;

/**
 * A loaded, validated scenario.
 */
typedef struct MqScenario MqScenario;

/**
 * One dataset row. Absent hop counts and PDTs are -1.
 */
typedef struct {
  uint64_t timestamp_ms;
  uint32_t test_id;
  uint32_t packet_id;
  uint16_t sender_address;
  uint16_t receiver_address;
  uint8_t ttl;
  int8_t tx_power_dbm;
  uint8_t priority_class;
  bool delivered;
  int16_t number_of_hops;
  int64_t pdt_ms;
} MqRecord;

/**
 * A network PDU with its payload inline.
 */
typedef struct {
  uint16_t src;
  uint16_t dst;
  uint8_t ttl;
  uint16_t seq;
  uint8_t priority;
  uint8_t payload_len;
  uint8_t payload[MQ_MAX_PAYLOAD];
} MqPdu;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *mq_last_error(void);

/**
 * Loads a built-in scenario (`experiment1`, `experiment2`).
 */
MqStatus mq_scenario_builtin(const char *name, MqScenario **out);

/**
 * Parses and validates a scenario from TOML text.
 */
MqStatus mq_scenario_from_toml(const char *text, MqScenario **out);

/**
 * Reads, parses and validates a scenario file.
 */
MqStatus mq_scenario_load(const char *path, MqScenario **out);

/**
 * Overrides every flow's packet count.
 */
MqStatus mq_scenario_set_packet_count(MqScenario *scenario, uint32_t packet_count);

MqStatus mq_scenario_flow_count(const MqScenario *scenario, size_t *out);

void mq_scenario_free(MqScenario *scenario);

/**
 * Simulates `scenario` with `seed`. The scenario is not modified.
 */
MqStatus mq_run(const MqScenario *scenario, uint64_t seed, MqRun **out);

void mq_run_free(MqRun *run);

MqStatus mq_run_record_count(const MqRun *run, size_t *out);

MqStatus mq_run_get_record(const MqRun *run, size_t index, MqRecord *out);

/**
 * KPI report as JSON. Release the string with [`mq_string_free`].
 */
MqStatus mq_run_kpi_json(const MqRun *run, char **out);

void mq_string_free(char *s);

/**
 * Writes the run's dataset CSV to `path`.
 */
MqStatus mq_run_export_csv(const MqRun *run, const char *path);

/**
 * Packs a sequence number and priority into the 24-bit SEQ field.
 */
MqStatus mq_pack_seq_priority(uint32_t seq, uint32_t priority, uint32_t *out);

MqStatus mq_unpack_seq_priority(uint32_t field, uint16_t *seq, uint8_t *priority);

/**
 * Encodes `pdu` into `buf`. `written` receives the encoded length, also when
 * the buffer is too small.
 */
MqStatus mq_pdu_encode(const MqPdu *pdu, uint8_t *buf, size_t capacity, size_t *written);

MqStatus mq_pdu_decode(const uint8_t *bytes, size_t len, MqPdu *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MESHQOS_H */
