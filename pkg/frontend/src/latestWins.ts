/**
 * Per-control debouncing with latest-wins response ordering.
 *
 * Slider drags emit bursts; only the last value in a settle window is
 * sent, and a response is applied only if no newer request for the same
 * control has been issued since. The view therefore never shows a
 * result older than the latest acknowledged request.
 */

export const DEBOUNCE_MS = 120;

type Task<T> = () => Promise<T>;

export class LatestWins {
  private timers = new Map<string, ReturnType<typeof setTimeout>>();
  private sequence = new Map<string, number>();

  constructor(private readonly debounceMs: number = DEBOUNCE_MS) {}

  /**
   * Schedule `task` for `key`, replacing any pending one. `apply` runs
   * only when the response belongs to the newest issued request.
   */
  schedule<T>(
    key: string,
    task: Task<T>,
    apply: (result: T) => void,
    onError: (err: unknown) => void = () => {},
  ): void {
    const pending = this.timers.get(key);
    if (pending !== undefined) clearTimeout(pending);
    this.timers.set(
      key,
      setTimeout(() => {
        this.timers.delete(key);
        const ticket = (this.sequence.get(key) ?? 0) + 1;
        this.sequence.set(key, ticket);
        task().then(
          (result) => {
            if (this.sequence.get(key) === ticket) apply(result);
          },
          (err) => {
            if (this.sequence.get(key) === ticket) onError(err);
          },
        );
      }, this.debounceMs),
    );
  }

  /** Issue immediately (still latest-wins), bypassing the settle window. */
  fire<T>(
    key: string,
    task: Task<T>,
    apply: (result: T) => void,
    onError: (err: unknown) => void = () => {},
  ): void {
    const pending = this.timers.get(key);
    if (pending !== undefined) {
      clearTimeout(pending);
      this.timers.delete(key);
    }
    const ticket = (this.sequence.get(key) ?? 0) + 1;
    this.sequence.set(key, ticket);
    task().then(
      (result) => {
        if (this.sequence.get(key) === ticket) apply(result);
      },
      (err) => {
        if (this.sequence.get(key) === ticket) onError(err);
      },
    );
  }
}
