#include "toydb.h"

#include <ctype.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#define MAX_ARGS 8

typedef struct Parser {
  const char *p;
  const char *error;
} Parser;

static void skip_ws(Parser *ps) {
  while (isspace((unsigned char)*ps->p)) ps->p++;
}

static int accept_char(Parser *ps, char c) {
  skip_ws(ps);
  if (*ps->p == c) {
    ps->p++;
    return 1;
  }
  return 0;
}

static int parse_expr(Parser *ps, toy_int *out);

static int parse_call(Parser *ps, const char *name, toy_int *out) {
  toy_int args[MAX_ARGS];
  int argc = 0;
  const ToyBuiltin *b;
  ToyContext ctx;

  if (!accept_char(ps, ')')) {
    do {
      if (argc == MAX_ARGS) {
        ps->error = "too many arguments";
        return 0;
      }
      if (!parse_expr(ps, &args[argc])) return 0;
      argc++;
    } while (accept_char(ps, ','));
    if (!accept_char(ps, ')')) {
      ps->error = "expected )";
      return 0;
    }
  }
  b = toy_find_builtin(name, argc);
  if (!b) {
    ps->error = "no such function";
    return 0;
  }
  memset(&ctx, 0, sizeof(ctx));
  b->impl(&ctx, argc, args);
  if (ctx.is_error) {
    ps->error = ctx.error;
    return 0;
  }
  *out = ctx.result;
  return 1;
}

static int parse_expr(Parser *ps, toy_int *out) {
  char name[64];
  size_t n = 0;
  int neg = 0;

  skip_ws(ps);
  if (*ps->p == '-') {
    neg = 1;
    ps->p++;
    skip_ws(ps);
  }
  if (isdigit((unsigned char)*ps->p)) {
    toy_int v = 0;
    while (isdigit((unsigned char)*ps->p)) {
      v = v * 10 + (*ps->p - '0');
      ps->p++;
    }
    *out = neg ? -v : v;
    return 1;
  }
  while (isalnum((unsigned char)*ps->p) || *ps->p == '_') {
    if (n + 1 < sizeof(name)) name[n++] = *ps->p;
    ps->p++;
  }
  name[n] = 0;
  if (n == 0 || !accept_char(ps, '(')) {
    ps->error = "syntax error";
    return 0;
  }
  if (!parse_call(ps, name, out)) return 0;
  if (neg) *out = -*out;
  return 1;
}

int main(int argc, char **argv) {
  Parser ps;
  toy_int result;

  if (argc != 2) {
    fprintf(stderr, "usage: toydb \"SELECT expr;\"\n");
    return 2;
  }
  ps.p = argv[1];
  ps.error = 0;
  skip_ws(&ps);
  if (strncmp(ps.p, "SELECT", 6) != 0 && strncmp(ps.p, "select", 6) != 0) {
    printf("ERROR: only SELECT is supported\n");
    return 1;
  }
  ps.p += 6;
  if (!parse_expr(&ps, &result)) {
    printf("ERROR: %s\n", ps.error ? ps.error : "unknown");
    return 1;
  }
  accept_char(&ps, ';');
  skip_ws(&ps);
  if (*ps.p) {
    printf("ERROR: trailing input\n");
    return 1;
  }
  printf("%lld\n", result);
  return 0;
}
