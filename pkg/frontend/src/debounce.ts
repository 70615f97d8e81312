/**
 * Single-in-flight request funnel with trailing coalescing.
 *
 * While a request is in flight, newer dispatches overwrite a single trailing
 * slot; when the flight lands, the trailing state (if any) is sent next, so
 * the latest state is always eventually applied. Every landing passes a
 * monotonically issued sequence number through a gate so responses that
 * arrive out of order are discarded rather than displayed.
 */

export interface ResponseGate {
  issue(): number;
  accept(id: number): boolean;
}

export function createResponseGate(): ResponseGate {
  let lastIssued = 0;
  let lastAccepted = 0;
  return {
    issue() {
      lastIssued += 1;
      return lastIssued;
    },
    accept(id: number) {
      if (id <= lastAccepted) return false;
      lastAccepted = id;
      return true;
    },
  };
}

export interface ApplyDebouncer<Req> {
  dispatch(request: Req): void;
  readonly inFlight: boolean;
}

export function createApplyDebouncer<Req, Resp>(
  send: (request: Req) => Promise<Resp>,
  onResult: (response: Resp, request: Req) => void,
  onError: (error: unknown, request: Req) => void,
): ApplyDebouncer<Req> {
  const gate = createResponseGate();
  let inFlight = false;
  let trailing: Req | null = null;

  const fire = (request: Req): void => {
    const id = gate.issue();
    inFlight = true;
    send(request)
      .then((response) => {
        if (gate.accept(id)) onResult(response, request);
      })
      .catch((error) => {
        gate.accept(id);
        onError(error, request);
      })
      .finally(() => {
        inFlight = false;
        if (trailing !== null) {
          const next = trailing;
          trailing = null;
          fire(next);
        }
      });
  };

  return {
    dispatch(request: Req) {
      if (inFlight) {
        trailing = request;
      } else {
        fire(request);
      }
    },
    get inFlight() {
      return inFlight;
    },
  };
}
