import type { JobView } from "./api.js";

export interface PollOptions {
  intervalMs?: number;
  maxAttempts?: number;
  backoffFactor?: number;
  maxIntervalMs?: number;
  sleep?: (ms: number) => Promise<void>;
  onStatus?: (status: string) => void;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Poll a job until it reaches done or failed. Network errors do not abort
 * the loop: the interval backs off exponentially and the last reported
 * status is preserved until the next successful read.
 */
export async function pollJob(
  getJob: (jobId: string) => Promise<JobView>,
  jobId: string,
  options: PollOptions = {}
): Promise<JobView> {
  const interval = options.intervalMs ?? 500;
  const maxAttempts = options.maxAttempts ?? 240;
  const backoffFactor = options.backoffFactor ?? 2;
  const maxInterval = options.maxIntervalMs ?? 8000;
  const sleep = options.sleep ?? defaultSleep;

  let wait = interval;
  for (let attempt = 1; attempt <= maxAttempts; attempt++) {
    try {
      const job = await getJob(jobId);
      if (job.status === "done" || job.status === "failed") {
        return job;
      }
      options.onStatus?.(job.status);
      wait = interval; // healthy read resets any backoff
    } catch (err) {
      console.error(`poll ${jobId} attempt ${attempt} failed:`, err);
      wait = Math.min(wait * backoffFactor, maxInterval);
    }
    if (attempt < maxAttempts) {
      await sleep(wait);
    }
  }
  throw new Error(`job ${jobId} did not finish within ${maxAttempts} polls`);
}
