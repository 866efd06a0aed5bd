#ifndef TOYDB_H
#define TOYDB_H

typedef long long toy_int;

typedef struct ToyContext {
  toy_int result;
  int is_error;
  const char *error;
} ToyContext;

typedef void (*toy_func)(ToyContext *ctx, int argc, const toy_int *argv);

typedef struct ToyBuiltin {
  const char *name;
  int arity;
  toy_func impl;
} ToyBuiltin;

/* Fetch the i-th argument of a builtin call. */
#define TOY_GETARG(argv, i) ((argv)[(i)])

/* Store the result of a builtin call and leave the function. */
#define TOY_RETURN(ctx, v) \
  do { \
    (ctx)->result = (v); \
    return; \
  } while (0)

/* Raise an SQL error from inside a builtin. */
#define TOY_ERROR(ctx, msg) \
  do { \
    (ctx)->is_error = 1; \
    (ctx)->error = (msg); \
    return; \
  } while (0)

/* Registration entry for functions over yyyymmdd encoded dates. */
#define TOY_DATE_FUNC(name, arity, impl) { name, arity, impl }

#define TOY_DATE_YEAR(d) ((d) / 10000)
#define TOY_DATE_MONTH(d) (((d) / 100) % 100)
#define TOY_DATE_DAY(d) ((d) % 100)

extern const ToyBuiltin aBuiltin[];

const ToyBuiltin *toy_find_builtin(const char *name, int argc);

#endif
