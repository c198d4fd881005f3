#ifndef CIRCOPT_H
#define CIRCOPT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CircoptStatus {
  CIRCOPT_STATUS_OK = 0,
  CIRCOPT_STATUS_NULL_ARGUMENT = 1,
  CIRCOPT_STATUS_INVALID_UTF8 = 2,
  CIRCOPT_STATUS_PARSE = 3,
  CIRCOPT_STATUS_IO = 4,
  CIRCOPT_STATUS_INVALID_INPUT = 5,
  CIRCOPT_STATUS_VERIFICATION = 6,
  CIRCOPT_STATUS_INTERNAL = 7,
} CircoptStatus;

// Opaque circuit handle.
typedef struct CircoptCircuit CircoptCircuit;

// Opaque rule-set handle.
typedef struct CircoptRuleSet CircoptRuleSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *circopt_last_error(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void circopt_string_free(char *s);

// Parse OpenQASM 2.0 text.
//
// # Safety
// `qasm` must be a nul-terminated string; `out` must be writable.
enum CircoptStatus circopt_circuit_from_qasm(const char *qasm, struct CircoptCircuit **out);

// Release a circuit. Null is ignored.
//
// # Safety
// `c` must come from this library and not have been freed.
void circopt_circuit_free(struct CircoptCircuit *c);

// Emit OpenQASM 2.0 text; free it with `circopt_string_free`.
//
// # Safety
// `c` must be a live circuit; `out` must be writable.
enum CircoptStatus circopt_circuit_to_qasm(const struct CircoptCircuit *c, char **out);

// Number of gates.
//
// # Safety
// `c` must be a live circuit; `out` must be writable.
enum CircoptStatus circopt_circuit_gate_count(const struct CircoptCircuit *c, size_t *out);

// Cost under `metric`: `total`, `cnot` or `depth`.
//
// # Safety
// `c` must be a live circuit, `metric` a nul-terminated string, `out` writable.
enum CircoptStatus circopt_circuit_cost(const struct CircoptCircuit *c,
                                        const char *metric,
                                        double *out);

// Whether two circuits have equal unitaries up to global phase (1) or not (0).
//
// # Safety
// `a` and `b` must be live circuits; `out` must be writable.
enum CircoptStatus circopt_circuits_equivalent(const struct CircoptCircuit *a,
                                               const struct CircoptCircuit *b,
                                               int32_t *out);

// Load and verify a rule file.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum CircoptStatus circopt_ruleset_load(const char *path, struct CircoptRuleSet **out);

// Generate a verified rule set over `gate_set` (`nam` or `ibm`).
//
// # Safety
// `gate_set` must be a nul-terminated string; `out` must be writable.
enum CircoptStatus circopt_ruleset_generate(const char *gate_set,
                                            size_t max_qubits,
                                            size_t max_gates,
                                            int32_t param_exprs,
                                            struct CircoptRuleSet **out);

// Number of actions (rules plus NOP).
//
// # Safety
// `r` must be a live rule set; `out` must be writable.
enum CircoptStatus circopt_ruleset_len(const struct CircoptRuleSet *r, size_t *out);

// Release a rule set. Null is ignored.
//
// # Safety
// `r` must come from this library and not have been freed.
void circopt_ruleset_free(struct CircoptRuleSet *r);

// Optimize total gate count with the desk profile, a freshly initialized
// agent seeded by `seed`, and `steps` environment steps.
//
// # Safety
// `c` and `r` must be live handles; `out` must be writable.
enum CircoptStatus circopt_optimize(const struct CircoptCircuit *c,
                                    const struct CircoptRuleSet *r,
                                    size_t steps,
                                    uint64_t seed,
                                    struct CircoptCircuit **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CIRCOPT_H */
