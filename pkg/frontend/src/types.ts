/** Payload types for the annotation service API.
 *
 * These mirror the server's task card exactly; system identities never
 * appear anywhere in them, so the client cannot leak which review came
 * from which system even by accident.
 */

export type Choice = "Left" | "Right" | "Tie";

export const CHOICES: readonly Choice[] = ["Left", "Right", "Tie"];

export interface TaskCardPayload {
  task_id: string;
  paragraph: string;
  paper_link: string;
  review_left: string;
  review_right: string;
  criterion: string;
  guideline: string;
}

export interface NextTaskResponse {
  done: false;
  task: TaskCardPayload;
  position: number;
  total: number;
}

export interface SessionDoneResponse {
  done: true;
  judged: number;
  total: number;
}

export type NextResponse = NextTaskResponse | SessionDoneResponse;

/** What the screen shows: the card as delivered plus an "m of N" counter. */
export interface TaskView extends TaskCardPayload {
  position: number;
  total: number;
}

export function toTaskView(response: NextTaskResponse): TaskView {
  return {
    ...response.task,
    position: response.position,
    total: response.total,
  };
}
