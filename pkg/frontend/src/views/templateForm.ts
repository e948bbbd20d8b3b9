/** Configure-and-submit form for a template's free fields.
 *
 * Only free fields render editable; frozen paths show read-only. The new
 * workflow's name (and any name-bearing free field) is validated against
 * the identifier grammar client-side, mirroring the server rule, before
 * submit is enabled.
 */

import { identifierError } from "../identifiers";
import { esc } from "../render";

export interface TemplateFormModel {
  templateId: string;
  templateName: string;
  freeFields: string[];
  frozenSample: string[]; // a peek of frozen paths, rendered read-only
}

export interface FormState {
  name: string;
  fills: Record<string, string>;
}

export interface FieldIssue {
  path: string; // "name" or a config path
  message: string;
}

/** Free fields whose fill must itself be an identifier (name-like paths);
 * argument and binding values stay free-form. */
export function needsIdentifier(path: string): boolean {
  return /(^|\.)name$/i.test(path);
}

/** Client-side validation mirroring the server's identifier rule. */
export function validateForm(state: FormState): FieldIssue[] {
  const issues: FieldIssue[] = [];
  const nameError = identifierError(state.name);
  if (nameError) issues.push({ path: "name", message: nameError });
  for (const [path, value] of Object.entries(state.fills)) {
    if (value === "") continue; // absent fills fall back to template defaults
    if (needsIdentifier(path)) {
      const err = identifierError(value);
      if (err) issues.push({ path, message: err });
    }
  }
  return issues;
}

export function renderTemplateForm(
  model: TemplateFormModel,
  state: FormState,
  issues: FieldIssue[],
): string {
  const issueFor = new Map(issues.map((i) => [i.path, i.message]));
  const nameIssue = issueFor.get("name");
  const fields = model.freeFields.map((path) => {
    const message = issueFor.get(path);
    return `<label class="field${message ? " invalid" : ""}">
  <span class="path">${esc(path)}</span>
  <input name="${esc(path)}" value="${esc(state.fills[path] ?? "")}" data-free-field="1">
  ${message ? `<span class="error">${esc(message)}</span>` : ""}
</label>`;
  });
  const frozen = model.frozenSample
    .map((p) => `<label class="field frozen"><span class="path">${esc(p)}</span><input value="(frozen)" readonly disabled></label>`)
    .join("\n");
  const blocked = issues.length > 0;
  return `<section class="panel"><h2>Instantiate ${esc(model.templateName)}</h2>
<form data-template="${esc(model.templateId)}">
<label class="field${nameIssue ? " invalid" : ""}">
  <span class="path">workflow name</span>
  <input name="__name__" value="${esc(state.name)}" data-name-field="1">
  ${nameIssue ? `<span class="error">${esc(nameIssue)}</span>` : ""}
</label>
${fields.join("\n")}
${frozen}
<button type="submit"${blocked ? " disabled" : ""}>Create &amp; submit</button>
${blocked ? '<p class="error">fix the highlighted fields first</p>' : ""}
</form></section>`;
}
