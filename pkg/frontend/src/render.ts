// DOM rendering for the console.  Everything here is presentation; the
// state transitions live in session.ts where the tests can reach them.

import type { SessionStore } from './session'
import type { OwnedRow, PolicyOption, SharedRow } from './types'
import { policyLabel } from './types'

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  text?: string,
  className?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag)
  if (text !== undefined) node.textContent = text
  if (className !== undefined) node.className = className
  return node
}

function expiryLabel(expiresAt: number): string {
  if (expiresAt === 0) return 'never expires'
  return `expires ${new Date(expiresAt * 1000).toISOString()}`
}

function ownedTable(store: SessionStore, rows: OwnedRow[], options: PolicyOption[]): HTMLElement {
  const section = el('section')
  section.append(el('h2', 'My data'))
  if (rows.length === 0) {
    section.append(el('p', 'Nothing here yet. Items appear after an application shares data.', 'empty'))
    return section
  }
  const table = el('table')
  const head = el('tr')
  for (const title of ['type', 'value', 'device', 'expiry', 'sharing policy', '']) {
    head.append(el('th', title))
  }
  table.append(head)
  for (const row of rows) {
    const tr = el('tr')
    tr.append(el('td', row.dataType))
    tr.append(el('td', row.dataValue, 'value'))
    tr.append(el('td', row.deviceId || '-'))
    tr.append(el('td', expiryLabel(row.expiresAt)))
    const policyCell = el('td')
    const badge = el('span', policyLabel(row.policy), row.overridden ? 'badge overridden' : 'badge')
    if (row.overridden) badge.title = 'set by you, applications cannot change it'
    policyCell.append(badge)
    tr.append(policyCell)
    const actions = el('td')
    const select = el('select')
    for (const option of options) {
      const opt = el('option', option.displayName)
      opt.value = JSON.stringify(option.policy)
      select.append(opt)
    }
    const apply = el('button', 'set policy')
    apply.addEventListener('click', () => {
      void store
        .overridePolicy(row.objectId, JSON.parse(select.value))
        .catch((err) => showError(String(err)))
    })
    actions.append(select, apply)
    tr.append(actions)
    table.append(tr)
  }
  section.append(table)
  return section
}

function sharedTable(rows: SharedRow[]): HTMLElement {
  const section = el('section')
  section.append(el('h2', 'Data shared with me'))
  if (rows.length === 0) {
    section.append(el('p', 'Nobody is sharing anything with you right now.', 'empty'))
    return section
  }
  const table = el('table')
  const head = el('tr')
  for (const title of ['type', 'value', 'device', 'expiry', 'from']) {
    head.append(el('th', title))
  }
  table.append(head)
  for (const row of rows) {
    const tr = el('tr')
    tr.append(el('td', row.dataType))
    tr.append(el('td', row.dataValue, 'value'))
    tr.append(el('td', row.deviceId || '-'))
    tr.append(el('td', expiryLabel(row.expiresAt)))
    tr.append(el('td', `${row.ownerName} (${row.ownerSocialId})`))
    table.append(tr)
  }
  section.append(table)
  return section
}

function showError(message: string): void {
  const banner = document.getElementById('error')
  if (banner) {
    banner.textContent = message
    banner.classList.remove('hidden')
    setTimeout(() => banner.classList.add('hidden'), 6000)
  }
}

export function renderApp(root: HTMLElement, store: SessionStore): void {
  root.replaceChildren()
  const banner = el('div', '', 'error hidden')
  banner.id = 'error'
  root.append(banner)

  if (store.state === null) {
    const form = el('form')
    form.append(el('h2', 'Sign in'))
    form.append(
      el('p', 'Development login against the mock social network; no real account involved.', 'dev-note'),
    )
    const input = el('input')
    input.placeholder = 'social id (e.g. alice)'
    const button = el('button', 'log in')
    button.type = 'submit'
    form.append(input, button)
    form.addEventListener('submit', (event) => {
      event.preventDefault()
      void store.login(input.value.trim()).catch((err) => showError(String(err)))
    })
    root.append(form)
    return
  }

  const state = store.state
  const bar = el('div', '', 'topbar')
  bar.append(el('span', `${state.identity.social_name} (${state.identity.social_id}@${state.identity.network})`))
  const reload = el('button', 'reload')
  reload.addEventListener('click', () => void store.refresh().catch((err) => showError(String(err))))
  const logout = el('button', 'log out')
  logout.addEventListener('click', () => store.logout())
  bar.append(reload, logout)
  root.append(bar)

  root.append(ownedTable(store, state.owned, state.policyOptions))
  root.append(sharedTable(state.shared))

  const danger = el('section', '', 'danger')
  danger.append(el('h2', 'Leave the service'))
  danger.append(el('p', 'Removes your account and every item you ever shared. Type your social id to confirm.'))
  const confirm = el('input')
  confirm.placeholder = state.identity.social_id
  const button = el('button', 'unregister')
  button.addEventListener('click', () => {
    void store.unregister(confirm.value.trim()).catch((err) => showError(String(err)))
  })
  danger.append(confirm, button)
  root.append(danger)
}
